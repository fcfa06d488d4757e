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

#include "cluesep/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>

#include "json.hpp"

#include "cluesep/error.hpp"

namespace cluesep::data {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view attribute_name(Attribute a) {
  switch (a) {
    case Attribute::kSpeakerId: return "speaker_id";
    case Attribute::kEmotion: return "emotion";
    case Attribute::kPitch: return "pitch";
    case Attribute::kGender: return "gender";
    case Attribute::kAccent: return "accent";
    case Attribute::kTempo: return "tempo";
  }
  return "?";
}

Attribute parse_attribute(std::string_view name) {
  for (Attribute a : kAllAttributes)
    if (attribute_name(a) == name) return a;
  throw ConfigError("unknown attribute '" + std::string(name) + "'");
}

const std::string& StyleAttributes::get(Attribute a) const {
  switch (a) {
    case Attribute::kSpeakerId: return speaker_id;
    case Attribute::kEmotion: return emotion;
    case Attribute::kPitch: return pitch;
    case Attribute::kGender: return gender;
    case Attribute::kAccent: return accent;
    case Attribute::kTempo: return tempo;
  }
  return speaker_id;
}

std::string& StyleAttributes::get(Attribute a) {
  return const_cast<std::string&>(static_cast<const StyleAttributes&>(*this).get(a));
}

std::size_t count_differences(const StyleAttributes& a, const StyleAttributes& b) {
  std::size_t n = 0;
  for (Attribute at : kAllAttributes) n += a.get(at) != b.get(at);
  return n;
}

void validate_attributes(const StyleAttributes& a) {
  for (Attribute at : kAllAttributes) {
    if (a.get(at).empty()) throw InputError("empty attribute " + std::string(attribute_name(at)));
  }
  auto one_of = [](const std::string& v, std::initializer_list<const char*> allowed) {
    return std::any_of(allowed.begin(), allowed.end(), [&](const char* s) { return v == s; });
  };
  if (!one_of(a.pitch, {"high", "neutral", "low"})) throw InputError("pitch '" + a.pitch + "' not in {high,neutral,low}");
  if (!one_of(a.tempo, {"fast", "neutral", "slow"})) throw InputError("tempo '" + a.tempo + "' not in {fast,neutral,slow}");
  if (!one_of(a.gender, {"male", "female"})) throw InputError("gender '" + a.gender + "' not in {male,female}");
}

std::size_t UtteranceRecord::samples() const {
  return static_cast<std::size_t>(std::llround(duration_s * dsp::kSampleRate));
}

// ---- manifest

namespace {

json record_json(const UtteranceRecord& r, const fs::path& base) {
  fs::path p = r.path;
  if (!base.empty() && p.is_absolute()) {
    const fs::path rel = p.lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") p = rel;
  }
  json j{{"id", r.id}, {"path", p.generic_string()}, {"duration_s", r.duration_s}};
  for (Attribute a : kAllAttributes) j[std::string(attribute_name(a))] = r.attributes.get(a);
  j["transcript"] = r.transcript ? json(*r.transcript) : json(nullptr);
  return j;
}

}  // namespace

Manifest parse_manifest(std::istream& in, const fs::path& base_dir, DurationBounds bounds) {
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  auto reject = [&](const std::string& id, std::string reason) {
    spdlog::info("manifest line {} ({}) rejected: {}", lineno, id.empty() ? "?" : id, reason);
    m.rejected.push_back({lineno, id, std::move(reason)});
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      reject("", "invalid json");
      continue;
    }
    const std::string id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "";
    std::string missing;
    for (const char* key : {"id", "path", "duration_s", "speaker_id", "emotion", "pitch", "gender", "accent", "tempo"}) {
      if (!j.contains(key) || j[key].is_null()) {
        missing = key;
        break;
      }
    }
    if (!missing.empty()) {
      reject(id, "missing field " + missing);
      continue;
    }
    UtteranceRecord r;
    try {
      r.id = j["id"].get<std::string>();
      r.path = j["path"].get<std::string>();
      r.duration_s = j["duration_s"].get<double>();
      for (Attribute a : kAllAttributes) r.attributes.get(a) = j[std::string(attribute_name(a))].get<std::string>();
      if (j.contains("transcript") && j["transcript"].is_string()) r.transcript = j["transcript"].get<std::string>();
      validate_attributes(r.attributes);
    } catch (const json::exception& e) {
      reject(id, std::string("bad field type: ") + e.what());
      continue;
    } catch (const InputError& e) {
      reject(id, e.what());
      continue;
    }
    if (r.duration_s < bounds.min_s) {
      reject(id, fmt::format("duration<{:g}s", bounds.min_s));
      continue;
    }
    if (r.duration_s > bounds.max_s) {
      reject(id, fmt::format("duration>{:g}s", bounds.max_s));
      continue;
    }
    if (r.path.is_relative()) r.path = base_dir / r.path;
    m.records.push_back(std::move(r));
  }
  return m;
}

Manifest ingest_manifest(const fs::path& path, DurationBounds bounds) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  Manifest m = parse_manifest(in, fs::absolute(path).parent_path(), bounds);
  spdlog::info("{}: {} records accepted, {} rejected", path.string(), m.records.size(), m.rejected.size());
  return m;
}

void write_manifest(const fs::path& path, const std::vector<UtteranceRecord>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  const fs::path base = fs::absolute(path).parent_path();
  for (const auto& r : records) out << record_json(r, base).dump() << '\n';
}

Corpus::Corpus(std::vector<UtteranceRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!by_id_.emplace(records_[i].id, i).second) throw DataError("duplicate utterance id " + records_[i].id);
  }
}

const UtteranceRecord& Corpus::at(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw LookupError("unknown utterance id '" + id + "'");
  return records_[it->second];
}

// ---- clues

std::string_view length_class_name(LengthClass c) {
  switch (c) {
    case LengthClass::kLong: return "long";
    case LengthClass::kMid: return "mid";
    case LengthClass::kShort: return "short";
  }
  return "?";
}

LengthClass parse_length_class(std::string_view name) {
  for (LengthClass c : kLengthClasses)
    if (length_class_name(c) == name) return c;
  throw ConfigError("unknown length class '" + std::string(name) + "'");
}

void validate_clue(const ClueSpec& clue) {
  if (clue.text.empty()) throw DataError("clue text is empty");
  if (clue.kind == ClueKind::kTypeIIReference) {
    if (!clue.reference_id || !clue.highlighted) throw DataError("Type II clue needs reference_id and highlighted_attribute");
  } else if (clue.reference_id || clue.highlighted) {
    throw DataError("Type I clue carries a reference");
  }
}

namespace {

struct Placeholder {
  std::string base;
  bool article = false;
  bool capital = false;
};

Placeholder parse_placeholder(std::string name) {
  Placeholder p;
  if (name.rfind("a_", 0) == 0) {
    p.article = true;
    name = name.substr(2);
  } else if (name.rfind("an_", 0) == 0) {
    p.article = true;
    name = name.substr(3);
  }
  if (!name.empty() && std::isupper(static_cast<unsigned char>(name[0]))) {
    p.capital = true;
    name[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(name[0])));
  }
  p.base = std::move(name);
  return p;
}

const std::regex& placeholder_re() {
  static const std::regex re(R"(\{([A-Za-z_]+)\})");
  return re;
}

}  // namespace

ClueTemplates ClueTemplates::parse(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("clue templates: ") + e.what());
  }
  ClueTemplates t;
  for (LengthClass c : kLengthClasses) {
    const std::string key(length_class_name(c));
    if (!j.contains(key) || !j[key].is_array() || j[key].empty()) throw ConfigError("clue templates: no '" + key + "' entries");
    for (const auto& s : j[key]) {
      Entry e{s.get<std::string>(), {}};
      for (std::sregex_iterator it(e.pattern.begin(), e.pattern.end(), placeholder_re()), end; it != end; ++it) {
        const Placeholder p = parse_placeholder((*it)[1].str());
        const std::string base = p.base == "gender_noun" ? "gender" : p.base;
        const Attribute a = parse_attribute(base);
        if (std::find(e.mentions.begin(), e.mentions.end(), a) == e.mentions.end()) e.mentions.push_back(a);
      }
      t.entries_[c].push_back(std::move(e));
    }
  }
  t.type2_ = j.value("type2", std::string("Isolate the speech with the same {attr_noun} as the reference."));
  if (j.contains("words")) {
    for (const auto& [k, v] : j["words"].items()) t.words_[k] = v.get<std::string>();
  }
  return t;
}

ClueTemplates ClueTemplates::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open clue templates " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

fs::path default_template_path() { return fs::path(CLUESEP_DATA_DIR) / "clue_templates.json"; }

std::size_t ClueTemplates::count(LengthClass c) const {
  auto it = entries_.find(c);
  return it == entries_.end() ? 0 : it->second.size();
}

const std::vector<Attribute>& ClueTemplates::mentions(LengthClass c, std::size_t index) const {
  return entries_.at(c).at(index).mentions;
}

std::string ClueTemplates::expand(const std::string& pattern, const StyleAttributes& a,
                                  std::optional<Attribute> attr) const {
  auto word = [&](const std::string& table, const std::string& value) {
    auto it = words_.find(table + "." + value);
    return it == words_.end() ? value : it->second;
  };
  std::string out;
  auto last = pattern.cbegin();
  for (std::sregex_iterator it(pattern.begin(), pattern.end(), placeholder_re()), end; it != end; ++it) {
    out.append(last, pattern.cbegin() + it->position());
    last = pattern.cbegin() + it->position() + it->length();
    const Placeholder p = parse_placeholder((*it)[1].str());
    std::string w;
    if (p.base == "attr_noun") {
      if (!attr) throw ConfigError("{attr_noun} outside the Type II prompt");
      w = word("attr_noun", std::string(attribute_name(*attr)));
    } else if (p.base == "gender_noun") {
      w = word("gender_noun", a.gender);
    } else {
      w = word(p.base, a.get(parse_attribute(p.base)));
    }
    if (p.article) {
      const char c0 = static_cast<char>(std::tolower(static_cast<unsigned char>(w.empty() ? 'x' : w[0])));
      w = (std::string("aeiou").find(c0) != std::string::npos ? "an " : "a ") + w;
    }
    if (p.capital && !w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    out += w;
  }
  out.append(last, pattern.cend());
  return out;
}

std::string ClueTemplates::render(const StyleAttributes& target, LengthClass c, std::size_t index) const {
  return expand(entries_.at(c).at(index).pattern, target, std::nullopt);
}

std::string ClueTemplates::render_type2(Attribute highlighted) const {
  return expand(type2_, StyleAttributes{}, highlighted);
}

std::string render_text_clue(const ClueTemplates& t, const StyleAttributes& target, LengthClass c) {
  return t.render(target, c, 0);
}

// ---- pairing

const UtteranceRecord& pair_interference(const UtteranceRecord& target, std::span<const UtteranceRecord> pool,
                                         Rng& rng, std::span<const Attribute> must_differ) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& c = pool[i];
    if (c.id == target.id || count_differences(c.attributes, target.attributes) == 0) continue;
    bool ok = true;
    for (Attribute a : must_differ) ok = ok && c.attributes.get(a) != target.attributes.get(a);
    if (ok) candidates.push_back(i);
  }
  if (candidates.empty()) throw PairingExhausted("no interference candidate for " + target.id);
  return pool[candidates[rng.index(candidates.size())]];
}

const UtteranceRecord& select_reference(const UtteranceRecord& target, const UtteranceRecord& interference,
                                        std::span<const UtteranceRecord> pool, Attribute attribute, Rng& rng) {
  const std::string& want = target.attributes.get(attribute);
  if (want == interference.attributes.get(attribute)) {
    throw PairingExhausted(fmt::format("{}: target and interference share {} '{}'", target.id,
                                       attribute_name(attribute), want));
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].id != target.id && pool[i].attributes.get(attribute) == want) candidates.push_back(i);
  }
  if (candidates.empty()) {
    throw PairingExhausted(fmt::format("{}: no reference with {} '{}'", target.id, attribute_name(attribute), want));
  }
  return pool[candidates[rng.index(candidates.size())]];
}

// ---- mixtures

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  for (Split s : {Split::kTrain, Split::kDev, Split::kTest})
    if (split_name(s) == name) return s;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

namespace {

bool exactly_one_ok(const StyleAttributes& t, const StyleAttributes& i, const MixGenConfig& cfg) {
  if (!cfg.exactly_one_difference) return true;
  return cfg.contrast.size() == 1 && count_differences(t, i) == 1;
}

std::size_t draw_onset(std::size_t target_samples, double fraction, Rng& rng) {
  const auto hi = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(target_samples)));
  return static_cast<std::size_t>(rng.index(hi + 1));
}

}  // namespace

MixGenResult generate_mixtures(const Corpus& corpus, const ClueTemplates& templates, const MixGenConfig& cfg) {
  if (corpus.size() < 2) throw PairingExhausted("need at least two utterances to mix");
  if (cfg.exactly_one_difference && cfg.contrast.size() != 1) {
    throw ConfigError("exactly_one_difference needs exactly one contrast attribute");
  }
  const auto& pool = corpus.records();
  MixGenResult out;
  out.mixtures.reserve(cfg.n_mixtures);
  for (std::size_t m = 0; m < cfg.n_mixtures; ++m) {
    Rng rng(derive_seed(cfg.seed, {0x6d6978ULL, m}));
    std::optional<MixtureSpec> made;
    for (std::size_t attempt = 0; attempt < cfg.max_attempts && !made; ++attempt) {
      const auto& target = pool[rng.index(pool.size())];
      try {
        std::vector<std::size_t> cand;
        for (std::size_t i = 0; i < pool.size(); ++i) {
          const auto& c = pool[i];
          if (c.id == target.id || count_differences(c.attributes, target.attributes) == 0) continue;
          bool ok = exactly_one_ok(target.attributes, c.attributes, cfg);
          for (Attribute a : cfg.contrast) ok = ok && c.attributes.get(a) != target.attributes.get(a);
          if (ok) cand.push_back(i);
        }
        if (cand.empty()) throw PairingExhausted("no interference for " + target.id);
        const auto& interf = pool[cand[rng.index(cand.size())]];

        // Highlighted attribute: first (in shuffled order) that admits a reference.
        std::vector<Attribute> order = cfg.highlight;
        std::shuffle(order.begin(), order.end(), rng.engine());
        const UtteranceRecord* ref = nullptr;
        Attribute hl = Attribute::kSpeakerId;
        for (Attribute a : order) {
          if (target.attributes.get(a) == interf.attributes.get(a)) continue;
          try {
            ref = &select_reference(target, interf, pool, a, rng);
            hl = a;
            break;
          } catch (const PairingExhausted&) {
          }
        }
        if (!ref) throw PairingExhausted("no reference for " + target.id);

        MixtureSpec s;
        s.mixture_id = fmt::format("{}{:06d}", cfg.id_prefix, m);
        s.target_id = target.id;
        s.interference_id = interf.id;
        s.target_lufs = rng.uniform(cfg.lufs_min, cfg.lufs_max);
        s.interference_lufs = rng.uniform(cfg.lufs_min, cfg.lufs_max);
        s.onset = draw_onset(target.samples(), cfg.max_onset_fraction, rng);

        const LengthClass lc = kLengthClasses[rng.index(kLengthClasses.size())];
        std::vector<std::size_t> useful;
        for (std::size_t t = 0; t < templates.count(lc); ++t) {
          for (Attribute a : templates.mentions(lc, t)) {
            if (target.attributes.get(a) != interf.attributes.get(a)) {
              useful.push_back(t);
              break;
            }
          }
        }
        std::size_t tpl;
        if (useful.empty()) {
          ++out.ambiguous_text;
          tpl = rng.index(templates.count(lc));
        } else {
          tpl = useful[rng.index(useful.size())];
        }
        s.text_clue = {ClueKind::kTypeIText, templates.render(target.attributes, lc, tpl), lc, std::nullopt,
                       std::nullopt};
        s.reference_clue = {ClueKind::kTypeIIReference, templates.render_type2(hl), std::nullopt, ref->id, hl};
        made = std::move(s);
      } catch (const PairingExhausted&) {
        ++out.unpairable_draws;
      }
    }
    if (!made) {
      throw PairingExhausted(fmt::format("mixture {}: {} target draws had no valid pairing ({} so far)", m,
                                         cfg.max_attempts, out.unpairable_draws));
    }
    out.mixtures.push_back(std::move(*made));
  }
  if (out.unpairable_draws > 0) spdlog::info("mixgen: {} target draws were unpairable", out.unpairable_draws);
  return out;
}

void make_splits(std::vector<MixtureSpec>& mixtures, std::uint64_t seed, SplitRatio ratio) {
  const std::size_t n = mixtures.size();
  const double total = static_cast<double>(ratio.train + ratio.dev + ratio.test);
  const auto n_train = static_cast<std::size_t>(std::llround(n * ratio.train / total));
  const auto n_dev = static_cast<std::size_t>(std::llround(n * ratio.dev / total));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0x73706c6974ULL}));
  std::shuffle(order.begin(), order.end(), rng.engine());
  for (std::size_t k = 0; k < n; ++k) {
    mixtures[order[k]].split = k < n_train ? Split::kTrain : k < n_train + n_dev ? Split::kDev : Split::kTest;
  }
}

std::vector<std::string> remix_alternatives(const MixtureSpec& spec, const Corpus& corpus) {
  const auto& tuple = corpus.at(spec.interference_id).attributes;
  std::vector<std::string> alt;
  for (const auto& r : corpus.records()) {
    if (r.id != spec.interference_id && r.id != spec.target_id && r.attributes == tuple) alt.push_back(r.id);
  }
  return alt;
}

MixtureSpec dynamic_remix(const MixtureSpec& spec, const Corpus& corpus, Rng& rng, double max_onset_fraction) {
  if (spec.split != Split::kTrain) throw ConfigError("dynamic_remix on non-train mixture " + spec.mixture_id);
  const auto alt = remix_alternatives(spec, corpus);
  if (alt.empty()) {
    spdlog::debug("{}: no same-tuple alternative, keeping {}", spec.mixture_id, spec.interference_id);
    return spec;
  }
  MixtureSpec out = spec;
  out.interference_id = alt[rng.index(alt.size())];
  out.onset = draw_onset(corpus.at(spec.target_id).samples(), max_onset_fraction, rng);
  out.clipping_gain = 1.0;
  return out;
}

double mean_remix_alternatives(std::span<const MixtureSpec> specs, const Corpus& corpus) {
  if (specs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : specs) total += static_cast<double>(remix_alternatives(s, corpus).size());
  return total / static_cast<double>(specs.size());
}

const AudioCache::Entry& AudioCache::get(const std::string& id) {
  auto it = entries_.find(id);
  if (it != entries_.end()) return *it->second;
  const auto& rec = corpus_->at(id);
  auto e = std::make_shared<Entry>();
  e->waveform = dsp::read_wav(rec.path);
  e->loudness = dsp::measure_lufs(e->waveform);
  return *entries_.emplace(id, std::move(e)).first->second;
}

SynthesizedMixture synthesize_mixture(const MixtureSpec& spec, AudioCache& cache) {
  try {
    const auto& t = cache.get(spec.target_id);
    const auto& i = cache.get(spec.interference_id);
    const auto ts = dsp::rescale_from(t.waveform, t.loudness, {spec.target_lufs});
    const auto is = dsp::rescale_from(i.waveform, i.loudness, {spec.interference_lufs});
    dsp::Mixed mixed = dsp::mix_at_onset(ts.waveform, is.waveform, spec.onset);
    SynthesizedMixture out;
    out.mixture = std::move(mixed.mixture);
    out.target = std::move(mixed.target);
    out.interference = std::move(mixed.interference);
    out.clipping_gain = mixed.clipping_gain;
    out.snr_lu = dsp::snr_lu({spec.target_lufs}, {spec.interference_lufs});
    if (spec.reference_clue.reference_id) out.clue_audio = cache.get(*spec.reference_clue.reference_id).waveform;
    return out;
  } catch (const DataError& e) {
    throw DataError(spec.mixture_id + ": " + e.what());
  }
}

AuditReport audit_mixtures(std::span<const MixtureSpec> specs, const Corpus& corpus, const MixGenConfig& cfg) {
  AuditReport rep;
  for (const auto& s : specs) {
    ++rep.checked;
    std::vector<std::string> bad;
    try {
      const auto& t = corpus.at(s.target_id).attributes;
      const auto& i = corpus.at(s.interference_id).attributes;
      if (count_differences(t, i) == 0) bad.push_back("target and interference share every attribute");
      validate_clue(s.text_clue);
      validate_clue(s.reference_clue);
      if (s.text_clue.kind != ClueKind::kTypeIText || !s.text_clue.length_class) bad.push_back("text clue is not Type I");
      if (s.reference_clue.kind != ClueKind::kTypeIIReference) bad.push_back("reference clue is not Type II");
      if (s.reference_clue.reference_id && s.reference_clue.highlighted) {
        const Attribute a = *s.reference_clue.highlighted;
        const auto& r = corpus.at(*s.reference_clue.reference_id).attributes;
        if (*s.reference_clue.reference_id == s.target_id) bad.push_back("reference is the target utterance");
        if (r.get(a) != t.get(a)) bad.push_back(fmt::format("reference {} != target", attribute_name(a)));
        if (t.get(a) == i.get(a)) bad.push_back(fmt::format("interference shares highlighted {}", attribute_name(a)));
      }
      for (double l : {s.target_lufs, s.interference_lufs}) {
        if (l < cfg.lufs_min || l > cfg.lufs_max) bad.push_back(fmt::format("lufs {} outside range", l));
      }
      if (s.onset > cfg.max_onset_fraction * static_cast<double>(corpus.at(s.target_id).samples()) + 1e-9) {
        bad.push_back("onset beyond range");
      }
    } catch (const DataError& e) {
      bad.push_back(e.what());
    }
    if (bad.empty()) {
      ++rep.passed;
    } else {
      std::string msg = s.mixture_id + ":";
      for (const auto& b : bad) msg += " " + b + ";";
      rep.failures.push_back(std::move(msg));
    }
  }
  return rep;
}

namespace {

json clue_json(const ClueSpec& c) {
  json j{{"kind", c.kind == ClueKind::kTypeIText ? "TypeI_text" : "TypeII_reference"}, {"text", c.text}};
  j["length_class"] = c.length_class ? json(std::string(length_class_name(*c.length_class))) : json(nullptr);
  j["reference_id"] = c.reference_id ? json(*c.reference_id) : json(nullptr);
  j["highlighted_attribute"] = c.highlighted ? json(std::string(attribute_name(*c.highlighted))) : json(nullptr);
  return j;
}

ClueSpec clue_from_json(const json& j) {
  ClueSpec c;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "TypeI_text") {
    c.kind = ClueKind::kTypeIText;
  } else if (kind == "TypeII_reference") {
    c.kind = ClueKind::kTypeIIReference;
  } else {
    throw FormatError("unknown clue kind " + kind);
  }
  c.text = j.at("text").get<std::string>();
  if (j.contains("length_class") && !j["length_class"].is_null())
    c.length_class = parse_length_class(j["length_class"].get<std::string>());
  if (j.contains("reference_id") && !j["reference_id"].is_null()) c.reference_id = j["reference_id"].get<std::string>();
  if (j.contains("highlighted_attribute") && !j["highlighted_attribute"].is_null())
    c.highlighted = parse_attribute(j["highlighted_attribute"].get<std::string>());
  return c;
}

}  // namespace

std::string mixture_line(const MixtureSpec& s) {
  json j{{"mixture_id", s.mixture_id},
         {"target_id", s.target_id},
         {"interference_id", s.interference_id},
         {"target_lufs", s.target_lufs},
         {"interference_lufs", s.interference_lufs},
         {"onset", s.onset},
         {"text_clue", clue_json(s.text_clue)},
         {"reference_clue", clue_json(s.reference_clue)},
         {"split", std::string(split_name(s.split))},
         {"clipping_gain", s.clipping_gain},
         {"snr_lu", s.snr_lu()}};
  return j.dump();
}

MixtureSpec parse_mixture_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    MixtureSpec s;
    s.mixture_id = j.at("mixture_id").get<std::string>();
    s.target_id = j.at("target_id").get<std::string>();
    s.interference_id = j.at("interference_id").get<std::string>();
    s.target_lufs = j.at("target_lufs").get<double>();
    s.interference_lufs = j.at("interference_lufs").get<double>();
    s.onset = j.at("onset").get<std::size_t>();
    s.text_clue = clue_from_json(j.at("text_clue"));
    s.reference_clue = clue_from_json(j.at("reference_clue"));
    s.split = parse_split(j.at("split").get<std::string>());
    s.clipping_gain = j.value("clipping_gain", 1.0);
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("mixture record: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("mixture record: ") + e.what());
  }
}

void write_mixtures(const fs::path& path, std::span<const MixtureSpec> specs) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : specs) out << mixture_line(s) << '\n';
}

std::vector<MixtureSpec> read_mixtures(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<MixtureSpec> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_mixture_line(line));
    } catch (const FormatError& e) {
      throw FormatError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

std::vector<MixtureSpec> filter_split(std::span<const MixtureSpec> specs, Split s) {
  std::vector<MixtureSpec> out;
  for (const auto& m : specs)
    if (m.split == s) out.push_back(m);
  return out;
}

}  // namespace cluesep::data
