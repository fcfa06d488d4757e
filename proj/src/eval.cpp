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

#include "cluesep/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "json.hpp"

#include "cluesep/error.hpp"

namespace cluesep::eval {

using nlohmann::json;
using nlohmann::ordered_json;

double si_sdri(std::span<const double> mixture, std::span<const double> estimate, std::span<const double> reference) {
  return train::si_sdr(estimate, reference) - train::si_sdr(mixture, reference);
}

namespace {

std::string stratum_label(data::Attribute a) {
  switch (a) {
    case data::Attribute::kSpeakerId: return "Speaker ID";
    case data::Attribute::kEmotion: return "Emotion";
    case data::Attribute::kAccent: return "Accent";
    case data::Attribute::kPitch: return "Pitch";
    case data::Attribute::kGender: return "Gender";
    case data::Attribute::kTempo: return "Tempo";
  }
  return "?";
}

std::string stratum_label(data::LengthClass c) {
  switch (c) {
    case data::LengthClass::kLong: return "Long";
    case data::LengthClass::kMid: return "Mid";
    case data::LengthClass::kShort: return "Short";
  }
  return "?";
}

std::vector<double> to_vec(const num::Var& v) {
  const auto vals = v.value().values();
  return {vals.begin(), vals.end()};
}

std::string fmt_cell(const Cell& c) {
  char buf[48];
  if (c.n == 0) return "n=0";
  std::snprintf(buf, sizeof buf, "%.2f (n=%zu)", c.mean, c.n);
  return buf;
}

ordered_json cell_json(const Cell& c) {
  ordered_json j{{"label", c.label}, {"n", c.n}};
  j["mean_si_sdri"] = c.n ? json(c.mean) : json(nullptr);
  return j;
}

constexpr const char* kFooter =
    "note: audio-only runs are a single unstratified row. An audio clue alone names the speaker, so it is "
    "reported directly instead of being read off the Speaker ID column.";

}  // namespace

std::string record_line(const EvalRecord& r) {
  ordered_json j{{"mixture_id", r.mixture_id}, {"condition", train::condition_name(r.condition)}};
  j["length_class"] = r.length_class ? json(data::length_class_name(*r.length_class)) : json(nullptr);
  j["attribute"] = r.attribute ? json(data::attribute_name(*r.attribute)) : json(nullptr);
  j["si_sdr_mix"] = r.si_sdr_mix;
  j["si_sdr_est"] = r.si_sdr_est;
  j["si_sdri"] = r.si_sdri;
  for (const auto& [k, v] : r.extra) j[k] = v;
  return j.dump();
}

const ConditionSummary* EvalReport::summary(ClueCondition c) const {
  for (const auto& s : summaries)
    if (s.condition == c) return &s;
  return nullptr;
}

EvalReport summarize(std::vector<EvalRecord> records) {
  std::sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    if (a.condition != b.condition) return a.condition < b.condition;
    return a.mixture_id < b.mixture_id;
  });
  EvalReport rep;
  for (ClueCondition c : train::kConditions) {
    ConditionSummary s;
    s.condition = c;
    s.average.label = "Avg";
    std::vector<std::string> labels;
    if (c == ClueCondition::kTextOnly)
      for (auto lc : data::kLengthClasses) labels.push_back(stratum_label(lc));
    if (c == ClueCondition::kTextAudio)
      for (auto a : data::kHighlightable) labels.push_back(stratum_label(a));
    std::vector<double> sums(labels.size(), 0.0);
    std::vector<std::size_t> counts(labels.size(), 0);
    double total = 0.0;
    bool any = false;
    for (const auto& r : records) {
      if (r.condition != c) continue;
      any = true;
      std::string label;
      if (c == ClueCondition::kTextOnly && r.length_class) label = stratum_label(*r.length_class);
      if (c == ClueCondition::kTextAudio && r.attribute) label = stratum_label(*r.attribute);
      const auto it = std::find(labels.begin(), labels.end(), label);
      if (it != labels.end()) {
        const auto k = static_cast<std::size_t>(it - labels.begin());
        sums[k] += r.si_sdri;
        ++counts[k];
      } else if (!labels.empty()) {
        continue;  // unlabeled record in a stratified condition
      }
      total += r.si_sdri;
      ++s.average.n;
    }
    if (!any) continue;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      Cell cell{labels[k], counts[k], counts[k] ? sums[k] / static_cast<double>(counts[k]) : 0.0};
      s.strata.push_back(cell);
    }
    s.average.mean = s.average.n ? total / static_cast<double>(s.average.n) : 0.0;
    rep.summaries.push_back(std::move(s));
  }
  rep.records = std::move(records);
  return rep;
}

std::string EvalReport::to_json() const {
  ordered_json j;
  j["meta"] = json::parse(meta_json);
  j["metric"] = "si_sdri_db";
  ordered_json conds = ordered_json::object();
  for (const auto& s : summaries) {
    ordered_json c;
    ordered_json strata = ordered_json::array();
    for (const auto& cell : s.strata) strata.push_back(cell_json(cell));
    c["strata"] = strata;
    c["avg"] = cell_json(s.average);
    conds[std::string(train::condition_name(s.condition))] = c;
  }
  j["conditions"] = conds;
  j["footer"] = kFooter;
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  auto row = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof buf, i == 0 ? "%-12s" : " %16s", cells[i].c_str());
      out << buf;
    }
    out << '\n';
  };
  out << "SI-SDRi (dB)\n";
  for (const auto& s : summaries) {
    std::vector<std::string> head{"Clue"}, body{std::string(train::condition_name(s.condition))};
    for (const auto& c : s.strata) {
      head.push_back(c.label);
      body.push_back(fmt_cell(c));
    }
    head.push_back("Avg");
    body.push_back(fmt_cell(s.average));
    row(head);
    row(body);
    out << '\n';
  }
  out << kFooter << '\n';
  return out.str();
}

void EvalReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  auto open = [&dir](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw DataError("cannot write " + (dir / name).string());
    return f;
  };
  open("report.json") << to_json() << '\n';
  open("report.txt") << to_table();
  auto rec = open("records.jsonl");
  for (const auto& r : records) rec << record_line(r) << '\n';
}

EvalRecord evaluate_one(const Model& model, const clue::TextEncoder& text, data::AudioCache& cache,
                        const data::MixtureSpec& spec, ClueCondition condition, const EvalOptions& opt) {
  const data::SynthesizedMixture syn = data::synthesize_mixture(spec, cache);
  clue::ClueBundle bundle = train::make_bundle(spec, syn.clue_audio, condition);
  if (bundle.text) bundle.text = train::truncate_tokens(*bundle.text, opt.max_text_tokens);
  std::vector<double> est;
  {
    num::NoGradGuard no_grad;
    est = to_vec(model.extract(syn.mixture.samples, bundle, text));
  }
  EvalRecord r;
  r.mixture_id = spec.mixture_id;
  r.condition = condition;
  if (condition == ClueCondition::kTextOnly) r.length_class = spec.text_clue.length_class;
  if (condition == ClueCondition::kTextAudio) r.attribute = spec.reference_clue.highlighted;
  r.si_sdr_est = train::si_sdr(est, syn.target.samples);
  r.si_sdr_mix = train::si_sdr(syn.mixture.samples, syn.target.samples);
  r.si_sdri = r.si_sdr_est - r.si_sdr_mix;
  for (const auto& m : opt.metrics) r.extra[m->name()] = m->score(est, syn.target.samples, syn.mixture.samples);
  return r;
}

EvalReport evaluate(const Model& model, const clue::TextEncoder& text, data::AudioCache& cache,
                    std::span<const data::MixtureSpec> test, const EvalOptions& opt) {
  const std::size_t n = opt.max_items ? std::min(opt.max_items, test.size()) : test.size();
  std::vector<EvalRecord> records;
  records.reserve(n * opt.conditions.size());
  for (ClueCondition c : opt.conditions)
    for (std::size_t i = 0; i < n; ++i) records.push_back(evaluate_one(model, text, cache, test[i], c, opt));
  EvalReport rep = summarize(std::move(records));
  ordered_json meta{{"model", json::parse(model.config().to_json())},
                    {"text_encoder", text.name()},
                    {"mixtures", n},
                    {"parameters", model.params().scalar_count()}};
  rep.meta_json = meta.dump();
  return rep;
}

// ---- clue discrimination

double extraction_credit(std::span<const double> estimate, std::span<const double> own,
                         std::span<const double> other) {
  const double a = train::si_sdr(estimate, own), b = train::si_sdr(estimate, other);
  if (a > b) return 1.0;
  if (a == b) return 0.5;
  return 0.0;
}

namespace {

std::string type1_for(const data::ClueTemplates& templates, const data::StyleAttributes& self,
                      const data::StyleAttributes& other, data::LengthClass lc) {
  for (std::size_t i = 0; i < templates.count(lc); ++i)
    for (data::Attribute a : templates.mentions(lc, i))
      if (self.get(a) != other.get(a)) return templates.render(self, lc, i);
  return templates.render(self, lc, 0);
}

}  // namespace

CluePair swapped_clues(const data::MixtureSpec& spec, const data::ClueTemplates& templates, data::AudioCache& cache,
                       ClueCondition condition, std::uint64_t seed, std::size_t max_text_tokens) {
  const data::Corpus& corpus = cache.corpus();
  const auto& target = corpus.at(spec.target_id);
  const auto& interf = corpus.at(spec.interference_id);
  CluePair p;
  if (condition == ClueCondition::kTextOnly) {
    const auto lc = spec.text_clue.length_class.value_or(data::LengthClass::kShort);
    p.for_target.text = train::truncate_tokens(spec.text_clue.text, max_text_tokens);
    p.for_interference.text =
        train::truncate_tokens(type1_for(templates, interf.attributes, target.attributes, lc), max_text_tokens);
    return p;
  }
  if (!spec.reference_clue.reference_id || !spec.reference_clue.highlighted)
    throw DataError(spec.mixture_id + ": reference clue incomplete");
  const data::Attribute attr = *spec.reference_clue.highlighted;
  Rng rng(derive_seed(seed, {fnv1a(spec.mixture_id), 0xd15cULL}));
  const auto& other_ref = data::select_reference(interf, target, corpus.records(), attr, rng);
  p.for_target.audio = cache.get(*spec.reference_clue.reference_id).waveform;
  p.for_interference.audio = cache.get(other_ref.id).waveform;
  if (condition == ClueCondition::kTextAudio) {
    p.for_target.text = train::truncate_tokens(spec.reference_clue.text, max_text_tokens);
    p.for_interference.text = p.for_target.text;
  }
  return p;
}

double discrimination_credit(const Model& model, const clue::TextEncoder& text, const data::SynthesizedMixture& mix,
                             const CluePair& clues, std::size_t* ties) {
  num::NoGradGuard no_grad;
  const auto e1 = to_vec(model.extract(mix.mixture.samples, clues.for_target, text));
  const auto e2 = to_vec(model.extract(mix.mixture.samples, clues.for_interference, text));
  const double c1 = extraction_credit(e1, mix.target.samples, mix.interference.samples);
  const double c2 = extraction_credit(e2, mix.interference.samples, mix.target.samples);
  if (ties) *ties += (c1 == 0.5) + (c2 == 0.5);
  return c1 + c2;
}

DiscriminationResult clue_discrimination(const Model& model, const clue::TextEncoder& text, data::AudioCache& cache,
                                         const data::ClueTemplates& templates,
                                         std::span<const data::MixtureSpec> specs, ClueCondition condition,
                                         std::uint64_t seed, std::size_t max_text_tokens) {
  DiscriminationResult r;
  double credit = 0.0;
  for (const auto& spec : specs) {
    CluePair clues;
    try {
      clues = swapped_clues(spec, templates, cache, condition, seed, max_text_tokens);
    } catch (const PairingExhausted& e) {
      spdlog::warn("{}: no reference clue for the interference, skipped ({})", spec.mixture_id, e.what());
      ++r.skipped;
      continue;
    }
    credit += discrimination_credit(model, text, data::synthesize_mixture(spec, cache), clues, &r.ties);
    ++r.mixtures;
  }
  r.accuracy = r.mixtures ? credit / (2.0 * static_cast<double>(r.mixtures)) : 0.0;
  return r;
}

// ---- ablation

std::vector<AblationArm> default_arms() {
  using clue::FusionMode;
  using clue::PoolingMode;
  return {{"gated", FusionMode::kGated, PoolingMode::kAttention},
          {"average", FusionMode::kAverage, PoolingMode::kAttention},
          {"concat", FusionMode::kConcat, PoolingMode::kAttention},
          {"gated-no-attpool", FusionMode::kGated, PoolingMode::kMean}};
}

ModelConfig arm_config(const ModelConfig& base, const AblationArm& arm) {
  ModelConfig c = base;
  c.fusion = arm.fusion;
  c.pooling = arm.pooling;
  return c;
}

std::vector<std::string> config_diff(const ModelConfig& a, const ModelConfig& b) {
  const json ja = json::parse(a.to_json()), jb = json::parse(b.to_json());
  std::vector<std::string> keys;
  for (const auto& [k, v] : ja.items())
    if (!jb.contains(k) || jb.at(k) != v) keys.push_back(k);
  for (const auto& [k, v] : jb.items())
    if (!ja.contains(k)) keys.push_back(k);
  return keys;
}

std::map<std::string, std::array<double, 3>> reference_ablation_values() {
  return {{"gated", {16.84, 16.41, 15.72}},
          {"average", {15.89, 15.48, 14.78}},
          {"concat", {15.84, 15.46, 14.61}},
          {"gated-no-attpool", {14.86, 14.95, 13.73}}};
}

std::string AblationTable::to_json() const {
  ordered_json j;
  j["meta"] = json::parse(meta_json);
  j["columns"] = {"text-audio", "text-only", "audio-only"};
  const auto ref = reference_ablation_values();
  ordered_json out = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json row{{"arm", r.arm.name},
                     {"fusion", clue::fusion_name(r.arm.fusion)},
                     {"pooling", clue::pooling_name(r.arm.pooling)},
                     {"si_sdri", r.sdri},
                     {"n", r.n},
                     {"model_config", json::parse(r.model_config)}};
    if (auto it = ref.find(r.arm.name); it != ref.end()) row["full_scale_reference"] = it->second;
    out.push_back(row);
  }
  j["rows"] = out;
  j["note"] =
      "full_scale_reference values come from a full-corpus multi-GPU run and are not targets; compare arms "
      "against each other only";
  return j.dump(2);
}

std::string AblationTable::to_table() const {
  std::ostringstream out;
  char buf[160];
  const auto ref = reference_ablation_values();
  std::snprintf(buf, sizeof buf, "%-18s %11s %11s %11s   %s\n", "Fusion", "Text-Audio", "Text-Only", "Audio-Only",
                "(full-scale reference)");
  out << buf;
  for (const auto& r : rows) {
    std::string refs = "-";
    if (auto it = ref.find(r.arm.name); it != ref.end()) {
      char rb[64];
      std::snprintf(rb, sizeof rb, "%.2f / %.2f / %.2f", it->second[0], it->second[1], it->second[2]);
      refs = rb;
    }
    std::snprintf(buf, sizeof buf, "%-18s %11.2f %11.2f %11.2f   %s\n", r.arm.name.c_str(), r.sdri[0], r.sdri[1],
                  r.sdri[2], refs.c_str());
    out << buf;
  }
  out << "SI-SDRi (dB). Desk-scale arms share seeds and budget; only the relative order is meaningful.\n";
  return out.str();
}

std::pair<train::TrainResult, train::TrainResult> train_two_stage(
    Model& model, const clue::TextEncoder& text, const data::Corpus& corpus,
    const std::vector<data::MixtureSpec>& mixtures, const AblationBudget& budget, const std::filesystem::path& dir) {
  train::TrainConfig s1 = budget.stage1, s2 = budget.stage2;
  s1.stage = 1;
  s2.stage = 2;
  train::TrainResult r1, r2;
  {
    train::Trainer t(model, text, corpus, mixtures, s1);
    r1 = t.run({dir / "stage1", std::nullopt, false});
  }
  {
    train::Trainer t(model, text, corpus, mixtures, s2);
    r2 = t.run({dir / "stage2", dir / "stage1" / "best.ckpt", false});
  }
  restore_parameters(model, load_checkpoint(dir / "stage2" / "best.ckpt"));
  return {r1, r2};
}

AblationTable run_ablation(const ModelConfig& base, std::span<const AblationArm> arms, const clue::TextEncoder& text,
                           const data::Corpus& corpus, const std::vector<data::MixtureSpec>& mixtures,
                           const AblationBudget& budget, const std::filesystem::path& work_dir,
                           const EvalOptions& opt, const std::function<void(const std::string&)>& progress) {
  AblationTable table;
  const auto test = data::filter_split(mixtures, data::Split::kTest);
  for (const auto& arm : arms) {
    if (progress) progress("training arm " + arm.name);
    const ModelConfig cfg = arm_config(base, arm);
    for (const auto& key : config_diff(base, cfg))
      if (key != "fusion" && key != "pooling") throw ConfigError("ablation arm " + arm.name + " changes " + key);
    Model model(cfg);
    train_two_stage(model, text, corpus, mixtures, budget, work_dir / arm.name);
    data::AudioCache cache(corpus);
    EvalOptions eo = opt;
    eo.conditions.assign(train::kConditions.begin(), train::kConditions.end());
    const EvalReport rep = evaluate(model, text, cache, test, eo);
    AblationRow row;
    row.arm = arm;
    row.model_config = cfg.to_json();
    for (std::size_t c = 0; c < 3; ++c) {
      if (const auto* s = rep.summary(train::kConditions[c])) {
        row.sdri[c] = s->average.mean;
        row.n[c] = s->average.n;
      }
    }
    rep.write(work_dir / arm.name / "eval");
    table.rows.push_back(row);
    if (progress) progress("arm " + arm.name + " done");
  }
  ordered_json meta{{"base_model", json::parse(base.to_json())},
                    {"stage1_steps", budget.stage1.stage1_steps},
                    {"stage2_max_epochs", budget.stage2.max_epochs},
                    {"seed", budget.stage1.seed},
                    {"test_mixtures", test.size()}};
  table.meta_json = meta.dump();
  return table;
}

}  // namespace cluesep::eval
