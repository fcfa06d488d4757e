// Copyright 2026 The cluesep Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cluesep/audio.hpp"
#include "cluesep/rng.hpp"

namespace cluesep::data {

enum class Attribute { kSpeakerId, kEmotion, kPitch, kGender, kAccent, kTempo };

inline constexpr std::array<Attribute, 6> kAllAttributes = {Attribute::kSpeakerId, Attribute::kEmotion,
                                                            Attribute::kPitch,     Attribute::kGender,
                                                            Attribute::kAccent,    Attribute::kTempo};
// Attributes a reference clue may highlight (the evaluation strata).
inline constexpr std::array<Attribute, 5> kHighlightable = {Attribute::kSpeakerId, Attribute::kEmotion,
                                                            Attribute::kAccent, Attribute::kPitch,
                                                            Attribute::kGender};

std::string_view attribute_name(Attribute a);
Attribute parse_attribute(std::string_view name);  // ConfigError on unknown names

struct StyleAttributes {
  std::string speaker_id, emotion, pitch, gender, accent, tempo;

  const std::string& get(Attribute a) const;
  std::string& get(Attribute a);
  bool operator==(const StyleAttributes&) const = default;
};

std::size_t count_differences(const StyleAttributes& a, const StyleAttributes& b);
// Empty fields and out-of-vocabulary pitch/tempo/gender raise InputError.
void validate_attributes(const StyleAttributes& a);

struct UtteranceRecord {
  std::string id;
  std::filesystem::path path;  // absolute after ingest
  double duration_s = 0.0;
  StyleAttributes attributes;
  std::optional<std::string> transcript;

  std::size_t samples() const;
};

struct DurationBounds {
  double min_s = 3.0;
  double max_s = 15.0;
};

struct Rejection {
  std::size_t line = 0;
  std::string id;
  std::string reason;
};

struct Manifest {
  std::vector<UtteranceRecord> records;
  std::vector<Rejection> rejected;
};

// JSONL, one record per line. Bad records are skipped with a logged reason
// ("duration<3s", "missing field accent", ...); relative paths resolve
// against base_dir.
Manifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir, DurationBounds bounds = {});
Manifest ingest_manifest(const std::filesystem::path& path, DurationBounds bounds = {});
// Paths are written relative to the manifest directory when possible.
void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records);

// Id lookup over a record list.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<UtteranceRecord> records);

  const std::vector<UtteranceRecord>& records() const { return records_; }
  const UtteranceRecord& at(const std::string& id) const;  // LookupError
  bool contains(const std::string& id) const { return by_id_.count(id) != 0; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<UtteranceRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// ---- clues

enum class ClueKind { kTypeIText, kTypeIIReference };
enum class LengthClass { kLong, kMid, kShort };
inline constexpr std::array<LengthClass, 3> kLengthClasses = {LengthClass::kLong, LengthClass::kMid,
                                                              LengthClass::kShort};

std::string_view length_class_name(LengthClass c);
LengthClass parse_length_class(std::string_view name);

struct ClueSpec {
  ClueKind kind = ClueKind::kTypeIText;
  std::string text;
  std::optional<LengthClass> length_class;   // Type I
  std::optional<std::string> reference_id;   // Type II
  std::optional<Attribute> highlighted;      // Type II
};

// Type II needs reference_id and highlighted attribute, Type I neither.
void validate_clue(const ClueSpec& clue);

// Sentence templates per length class plus the Type II prompt. Placeholders
// are attribute names in braces; {a_x}/{an_x} adds an article, {X} capitalizes,
// {gender_noun} and {attr_noun} use the lookup tables of the file.
class ClueTemplates {
 public:
  static ClueTemplates load(const std::filesystem::path& path);
  static ClueTemplates parse(std::string_view json_text);

  std::size_t count(LengthClass c) const;
  // Attributes a template mentions; used to keep clues discriminative.
  const std::vector<Attribute>& mentions(LengthClass c, std::size_t index) const;
  std::string render(const StyleAttributes& target, LengthClass c, std::size_t index = 0) const;
  std::string render_type2(Attribute highlighted) const;

 private:
  struct Entry {
    std::string pattern;
    std::vector<Attribute> mentions;
  };
  std::string expand(const std::string& pattern, const StyleAttributes& a, std::optional<Attribute> attr) const;

  std::map<LengthClass, std::vector<Entry>> entries_;
  std::string type2_;
  std::map<std::string, std::string> words_;  // "pitch.neutral" -> "normal", "gender_noun.male" -> ...
};

std::filesystem::path default_template_path();

std::string render_text_clue(const ClueTemplates& t, const StyleAttributes& target, LengthClass c);

// ---- pairing

// Uniform draw among pool members that differ from the target in at least one
// attribute and in every attribute of `must_differ`. PairingExhausted when none.
const UtteranceRecord& pair_interference(const UtteranceRecord& target, std::span<const UtteranceRecord> pool,
                                         Rng& rng, std::span<const Attribute> must_differ = {});

// reference[attr] == target[attr] != interference[attr], reference != target.
const UtteranceRecord& select_reference(const UtteranceRecord& target, const UtteranceRecord& interference,
                                        std::span<const UtteranceRecord> pool, Attribute attribute, Rng& rng);

// ---- mixtures

enum class Split { kTrain, kDev, kTest };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

// Every mixture carries a Type I description and a Type II reference clue, so
// any clue condition can be drawn for it.
struct MixtureSpec {
  std::string mixture_id;
  std::string target_id;
  std::string interference_id;
  double target_lufs = -29.0;
  double interference_lufs = -29.0;
  std::size_t onset = 0;
  ClueSpec text_clue;
  ClueSpec reference_clue;
  Split split = Split::kTrain;
  double clipping_gain = 1.0;

  double snr_lu() const { return target_lufs - interference_lufs; }
};

struct MixGenConfig {
  std::size_t n_mixtures = 1000;
  std::uint64_t seed = 0;
  double lufs_min = -33.0;
  double lufs_max = -25.0;
  double max_onset_fraction = 0.5;
  std::vector<Attribute> contrast;  // interference must differ in all of these
  std::vector<Attribute> highlight{kHighlightable.begin(), kHighlightable.end()};
  bool exactly_one_difference = false;  // with a single contrast attribute: all others equal
  std::size_t max_attempts = 64;
  std::string id_prefix = "mix";
};

struct MixGenResult {
  std::vector<MixtureSpec> mixtures;
  std::size_t unpairable_draws = 0;  // target draws with no valid interference/reference
  std::size_t ambiguous_text = 0;    // Type I clues that mention no differing attribute
};

// Sequential and seed-deterministic. Splits are assigned afterwards.
MixGenResult generate_mixtures(const Corpus& corpus, const ClueTemplates& templates, const MixGenConfig& cfg);

struct SplitRatio {
  std::size_t train = 8, dev = 1, test = 1;
};
// Mixture-level 8:1:1 partition (counts within one of exact).
void make_splits(std::vector<MixtureSpec>& mixtures, std::uint64_t seed, SplitRatio ratio = {});

std::vector<std::string> remix_alternatives(const MixtureSpec& spec, const Corpus& corpus);
// Swap the interference for another utterance with the same full attribute
// tuple and draw a fresh onset. Train split only (ConfigError otherwise).
// Without alternatives the mixture comes back unchanged.
MixtureSpec dynamic_remix(const MixtureSpec& spec, const Corpus& corpus, Rng& rng, double max_onset_fraction = 0.5);
double mean_remix_alternatives(std::span<const MixtureSpec> specs, const Corpus& corpus);

// Decoded utterances with their measured loudness, loaded once.
class AudioCache {
 public:
  struct Entry {
    dsp::Waveform waveform;
    dsp::LoudnessLUFS loudness;
  };
  explicit AudioCache(const Corpus& corpus) : corpus_(&corpus) {}
  const Entry& get(const std::string& id);
  const Corpus& corpus() const { return *corpus_; }

 private:
  const Corpus* corpus_;
  std::unordered_map<std::string, std::shared_ptr<Entry>> entries_;
};

struct SynthesizedMixture {
  dsp::Waveform mixture;
  dsp::Waveform target;        // aligned reference
  dsp::Waveform interference;  // aligned, shifted by onset
  dsp::Waveform clue_audio;    // Type II reference utterance
  double snr_lu = 0.0;
  double clipping_gain = 1.0;
};

// Rescale both sources to their loudness targets, mix at onset, clip guard.
// DSP failures are rethrown as DataError prefixed with the mixture id.
SynthesizedMixture synthesize_mixture(const MixtureSpec& spec, AudioCache& cache);

struct AuditReport {
  std::size_t checked = 0;
  std::size_t passed = 0;
  std::vector<std::string> failures;  // "mix000001: ..."
  bool ok() const { return passed == checked; }
};
AuditReport audit_mixtures(std::span<const MixtureSpec> specs, const Corpus& corpus, const MixGenConfig& cfg = {});

std::string mixture_line(const MixtureSpec& spec);
MixtureSpec parse_mixture_line(std::string_view line);
void write_mixtures(const std::filesystem::path& path, std::span<const MixtureSpec> specs);
std::vector<MixtureSpec> read_mixtures(const std::filesystem::path& path);

std::vector<MixtureSpec> filter_split(std::span<const MixtureSpec> specs, Split s);

// ---- synthetic corpus

enum class ToyVariation {
  kFull,          // every attribute varies
  kPitchFamilies  // pitch alternates high/low; few emotion/tempo values
};

struct ToyCorpusConfig {
  std::size_t n_speakers = 4;
  std::size_t utts_per_speaker = 8;
  std::uint64_t seed = 0;
  ToyVariation variation = ToyVariation::kFull;
  double min_duration_s = 3.0;
  double max_duration_s = 4.0;
};

ToyVariation parse_toy_variation(std::string_view name);

// Attribute labels of the synthetic corpus, without rendering audio.
std::vector<UtteranceRecord> plan_toy_corpus(const ToyCorpusConfig& cfg);
// Harmonic source whose audible properties follow its labels: speaker ->
// harmonic template, pitch -> f0 band, tempo -> syllable rate, emotion ->
// vibrato code, gender -> spectral tilt, accent -> formant bump.
dsp::Waveform render_toy_utterance(const UtteranceRecord& record, std::uint64_t corpus_seed);
// Writes wav/<id>.wav and manifest.jsonl under out_dir; returns the records.
std::vector<UtteranceRecord> synth_toy_corpus(const ToyCorpusConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace cluesep::data
