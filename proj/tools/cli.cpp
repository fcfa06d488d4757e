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

#include "cli.hpp"

#include <openssl/sha.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "cluesep/diagnostics.hpp"
#include "cluesep/error.hpp"
#include "cluesep/eval.hpp"

namespace cluesep::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- resolved configuration

json default_config() {
  const train::TrainConfig t;
  const data::MixGenConfig m;
  const data::ToyCorpusConfig c;
  json highlight = json::array();
  for (auto a : data::kHighlightable) highlight.push_back(data::attribute_name(a));
  json conditions = json::array();
  for (auto k : train::kConditions) conditions.push_back(train::condition_name(k));
  return {
      {"paths",
       {{"manifest", ""}, {"mixtures", ""}, {"out", ""}, {"init_from", ""}, {"model", ""}, {"templates", ""},
        {"text_embeddings", ""}}},
      {"model", json::parse(ModelConfig{}.to_json())},
      {"train",
       {{"lr_stage1", t.lr_stage1},
        {"lr_stage2", t.lr_stage2},
        {"lr_floor", t.lr_floor},
        {"plateau_patience", t.plateau_patience},
        {"plateau_start_epoch", t.plateau_start_epoch},
        {"plateau_threshold", t.plateau_threshold},
        {"batch_size", t.batch_size},
        {"max_signal_s", t.max_signal_s},
        {"min_signal_s", t.min_signal_s},
        {"max_text_tokens", t.max_text_tokens},
        {"clue_ratio", t.clue_ratio},
        {"dm_enabled", true},
        {"seed", t.seed},
        {"grad_clip", t.grad_clip},
        {"stage1_steps", t.stage1_steps},
        {"max_epochs", t.max_epochs},
        {"steps_per_epoch", t.steps_per_epoch},
        {"max_val_items", t.max_val_items},
        {"stop_at_floor", t.stop_at_floor}}},
      {"data",
       {{"lufs_min", m.lufs_min},
        {"lufs_max", m.lufs_max},
        {"min_duration_s", data::DurationBounds{}.min_s},
        {"max_duration_s", data::DurationBounds{}.max_s},
        {"n_mixtures", m.n_mixtures},
        {"mix_seed", m.seed},
        {"split_seed", 0},
        {"split", {8, 1, 1}},
        {"max_onset_fraction", m.max_onset_fraction},
        {"contrast", json::array()},
        {"highlight", highlight},
        {"exactly_one_difference", m.exactly_one_difference},
        {"snr_histogram_bin_db", 1.0}}},
      {"corpus",
       {{"speakers", c.n_speakers},
        {"utterances", c.utts_per_speaker},
        {"seed", c.seed},
        {"variation", "full"},
        {"min_duration_s", c.min_duration_s},
        {"max_duration_s", c.max_duration_s}}},
      {"eval", {{"conditions", conditions}, {"max_items", 0}, {"discrimination", true}, {"seed", 0}}}};
}

void set_path(json& root, const std::string& dotted, const json& value) {
  json* node = &root;
  std::stringstream ss(dotted);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty config key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) throw ConfigError("unknown config section '" + parts[i] + "' in " + dotted);
    node = &(*node)[parts[i]];
  }
  if (!node->contains(parts.back())) throw ConfigError("unknown config key '" + dotted + "'");
  (*node)[parts.back()] = value;
}

json parse_value(const std::string& raw, bool as_string) {
  if (as_string) return raw;
  try {
    return json::parse(raw);
  } catch (const json::exception&) {
    return raw;
  }
}

// Leaf paths whose values differ from the defaults.
void diff_leaves(const json& def, const json& cur, const std::string& prefix, json& out) {
  if (def.is_object() && cur.is_object()) {
    for (const auto& [k, v] : cur.items()) {
      const std::string key = prefix.empty() ? k : prefix + "." + k;
      if (def.contains(k)) {
        diff_leaves(def.at(k), v, key, out);
      } else {
        out[key] = v;
      }
    }
    return;
  }
  if (def != cur) out[prefix] = cur;
}

struct Run {
  json config;
  json overrides;
  std::string command;
  std::map<std::string, std::string> inputs;  // path -> content hash

  const json& sec(const char* s) const { return config.at(s); }
  std::string path(const char* key) const { return config.at("paths").at(key).get<std::string>(); }
  std::string need_path(const char* key) const {
    const std::string p = path(key);
    if (p.empty()) throw ConfigError(command + ": missing --" + std::string(key == std::string("out") ? "out" : key));
    return p;
  }
  void input(const std::string& p) { inputs[p] = content_hash(p); }
};

ModelConfig model_config(const Run& r) { return ModelConfig::from_json(r.sec("model").dump()); }

train::TrainConfig train_config(const Run& r, int stage) {
  const json& j = r.sec("train");
  train::TrainConfig t;
  try {
    t.stage = stage;
    t.lr_stage1 = j.at("lr_stage1");
    t.lr_stage2 = j.at("lr_stage2");
    t.lr_floor = j.at("lr_floor");
    t.plateau_patience = j.at("plateau_patience");
    t.plateau_start_epoch = j.at("plateau_start_epoch");
    t.plateau_threshold = j.at("plateau_threshold");
    t.batch_size = j.at("batch_size");
    t.max_signal_s = j.at("max_signal_s");
    t.min_signal_s = j.at("min_signal_s");
    t.max_text_tokens = j.at("max_text_tokens");
    t.clue_ratio = j.at("clue_ratio").get<std::array<double, 3>>();
    t.dm_enabled = stage == 2 && j.at("dm_enabled").get<bool>();
    t.seed = j.at("seed");
    t.grad_clip = j.at("grad_clip");
    t.stage1_steps = j.at("stage1_steps");
    t.max_epochs = j.at("max_epochs");
    t.steps_per_epoch = j.at("steps_per_epoch");
    t.max_val_items = j.at("max_val_items");
    t.stop_at_floor = j.at("stop_at_floor");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  t.validate();
  return t;
}

data::DurationBounds duration_bounds(const Run& r) {
  return {r.sec("data").at("min_duration_s").get<double>(), r.sec("data").at("max_duration_s").get<double>()};
}

std::vector<data::Attribute> attributes(const json& j) {
  std::vector<data::Attribute> out;
  for (const auto& v : j) out.push_back(data::parse_attribute(v.get<std::string>()));
  return out;
}

data::MixGenConfig mixgen_config(const Run& r) {
  const json& j = r.sec("data");
  data::MixGenConfig m;
  try {
    m.n_mixtures = j.at("n_mixtures");
    m.seed = j.at("mix_seed");
    m.lufs_min = j.at("lufs_min");
    m.lufs_max = j.at("lufs_max");
    m.max_onset_fraction = j.at("max_onset_fraction");
    m.contrast = attributes(j.at("contrast"));
    m.highlight = attributes(j.at("highlight"));
    m.exactly_one_difference = j.at("exactly_one_difference");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("data config: ") + e.what());
  }
  if (m.lufs_min > m.lufs_max) throw ConfigError("data.lufs_min exceeds data.lufs_max");
  return m;
}

data::ClueTemplates templates(Run& r) {
  const std::string p = r.path("templates");
  const fs::path file = p.empty() ? data::default_template_path() : fs::path(p);
  r.input(file.string());
  return data::ClueTemplates::load(file);
}

std::unique_ptr<clue::TextEncoder> text_encoder(Run& r) {
  const std::string p = r.path("text_embeddings");
  if (p.empty()) return std::make_unique<clue::HashTextEncoder>();
  r.input(p);
  return std::make_unique<clue::PrecomputedTextEncoder>(clue::PrecomputedTextEncoder::load(p));
}

data::Corpus load_corpus(Run& r) {
  const std::string p = r.need_path("manifest");
  r.input(p);
  auto m = data::ingest_manifest(p, duration_bounds(r));
  if (m.records.empty()) throw DataError(p + ": no usable records");
  return data::Corpus(std::move(m.records));
}

std::vector<data::MixtureSpec> load_mixtures(Run& r) {
  const std::string p = r.need_path("mixtures");
  r.input(p);
  return data::read_mixtures(p);
}

json run_meta(const Run& r, const json& extra = json::object()) {
  json inputs = json::object();
  for (const auto& [p, h] : r.inputs) inputs[p] = h;
  json j{{"command", r.command}, {"config", r.config}, {"overrides", r.overrides}, {"inputs", inputs}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

// ---- commands

int cmd_synth_corpus(Run& r) {
  const fs::path out = r.need_path("out");
  const json& c = r.sec("corpus");
  data::ToyCorpusConfig tc;
  tc.n_speakers = c.at("speakers");
  tc.utts_per_speaker = c.at("utterances");
  tc.seed = c.at("seed");
  tc.variation = data::parse_toy_variation(c.at("variation").get<std::string>());
  tc.min_duration_s = c.at("min_duration_s");
  tc.max_duration_s = c.at("max_duration_s");
  const auto records = data::synth_toy_corpus(tc, out);
  const fs::path manifest = out / "manifest.jsonl";
  const auto check = data::ingest_manifest(manifest, duration_bounds(r));
  if (!check.rejected.empty()) {
    throw DataError(fmt::format("{}: {} records failed validation, first: line {} {}", manifest.string(),
                                check.rejected.size(), check.rejected[0].line, check.rejected[0].reason));
  }
  const std::string hash = content_hash(manifest.string());
  write_json(out / "run.json", run_meta(r, {{"outputs", {{manifest.string(), hash}}}, {"utterances", records.size()}}));
  std::printf("synthesized %zu utterances into %s\nmanifest %s (validated %zu/%zu)\n", records.size(),
              out.string().c_str(), hash.c_str(), check.records.size(), records.size());
  return 0;
}

int cmd_mixgen(Run& r) {
  const fs::path out = r.need_path("out");
  const data::Corpus corpus = load_corpus(r);
  const auto tpl = templates(r);
  const data::MixGenConfig mg = mixgen_config(r);
  auto result = data::generate_mixtures(corpus, tpl, mg);
  const auto ratio = r.sec("data").at("split").get<std::array<std::size_t, 3>>();
  data::make_splits(result.mixtures, r.sec("data").at("split_seed").get<std::uint64_t>(),
                    {ratio[0], ratio[1], ratio[2]});
  fs::create_directories(out);
  data::write_mixtures(out / "mixtures.jsonl", result.mixtures);

  const auto& mixes = result.mixtures;
  double mean = 0, sq = 0;
  for (const auto& m : mixes) mean += m.snr_lu();
  mean /= static_cast<double>(mixes.size());
  for (const auto& m : mixes) sq += (m.snr_lu() - mean) * (m.snr_lu() - mean);
  const double sd = mixes.size() > 1 ? std::sqrt(sq / static_cast<double>(mixes.size() - 1)) : 0.0;
  const double bin = r.sec("data").at("snr_histogram_bin_db");
  const double span = mg.lufs_max - mg.lufs_min;
  std::map<long, std::size_t> hist;
  for (const auto& m : mixes) ++hist[static_cast<long>(std::floor(m.snr_lu() / bin))];
  json histogram = json::array();
  for (long b = static_cast<long>(std::floor(-span / bin)); b <= static_cast<long>(std::floor(span / bin)); ++b)
    histogram.push_back({{"lo_db", b * bin}, {"hi_db", (b + 1) * bin}, {"count", hist[b]}});

  const auto audit = data::audit_mixtures(mixes, corpus, mg);
  std::array<std::size_t, 3> split_counts{};
  for (const auto& m : mixes) ++split_counts[static_cast<int>(m.split)];
  const auto train_split = data::filter_split(mixes, data::Split::kTrain);
  std::map<std::size_t, std::size_t> alt_hist;
  for (const auto& m : train_split) ++alt_hist[data::remix_alternatives(m, corpus).size()];
  json alt = json::object();
  for (const auto& [k, v] : alt_hist) alt[std::to_string(k)] = v;
  std::map<std::string, std::size_t> highlighted, lengths;
  for (const auto& m : mixes) {
    ++highlighted[std::string(data::attribute_name(*m.reference_clue.highlighted))];
    ++lengths[std::string(data::length_class_name(*m.text_clue.length_class))];
  }

  const json stats{
      {"mixtures", mixes.size()},
      {"snr_db", {{"mean", mean}, {"std", sd}, {"histogram", histogram}}},
      {"audit", {{"checked", audit.checked}, {"passed", audit.passed}, {"failures", audit.failures}}},
      {"splits", {{"train", split_counts[0]}, {"dev", split_counts[1]}, {"test", split_counts[2]}}},
      {"remix_alternatives", {{"mean", data::mean_remix_alternatives(train_split, corpus)}, {"histogram", alt}}},
      {"highlighted_attribute", highlighted},
      {"text_length_class", lengths},
      {"unpairable_draws", result.unpairable_draws},
      {"ambiguous_text_clues", result.ambiguous_text}};
  write_json(out / "stats.json", stats);
  write_json(out / "run.json", run_meta(r, {{"outputs", {{(out / "mixtures.jsonl").string(),
                                                          content_hash((out / "mixtures.jsonl").string())}}}}));
  std::printf("mixtures      %zu (train %zu / dev %zu / test %zu)\n", mixes.size(), split_counts[0], split_counts[1],
              split_counts[2]);
  std::printf("snr           mean %+.3f dB, std %.3f dB\n", mean, sd);
  for (const auto& h : histogram)
    if (h["count"].get<std::size_t>() > 0)
      std::printf("  [%+5.1f,%+5.1f) %6zu\n", h["lo_db"].get<double>(), h["hi_db"].get<double>(),
                  h["count"].get<std::size_t>());
  std::printf("audit         %zu/%zu passed\n", audit.passed, audit.checked);
  std::printf("alternatives  %.2f per train target\n", stats["remix_alternatives"]["mean"].get<double>());
  if (!audit.ok()) throw DataError(fmt::format("constraint audit failed for {} mixtures, first: {}",
                                               audit.checked - audit.passed, audit.failures.front()));
  return 0;
}

int cmd_train(Run& r, int stage) {
  const fs::path out = r.need_path("out");
  const data::Corpus corpus = load_corpus(r);
  auto mixes = load_mixtures(r);
  const train::TrainConfig tc = train_config(r, stage);
  const auto enc = text_encoder(r);
  Model model(model_config(r));
  train::RunPaths paths{out, std::nullopt, r.config.value("resume", false)};
  if (const std::string init = r.path("init_from"); !init.empty()) {
    paths.init_from = init;
    if (fs::exists(init)) r.input(init);
  }
  write_json(out / "run.json", run_meta(r, {{"stage", stage}, {"parameters", model.params().scalar_count()}}));
  spdlog::info("stage {} training: {} parameters, {} mixtures", stage, model.params().scalar_count(), mixes.size());
  train::Trainer trainer(model, *enc, corpus, std::move(mixes), tc);
  const auto res = trainer.run(paths, [](const train::EpochLog& e) {
    std::printf("epoch %3zu  lr %.3g  train %.4f  val %.4f  [%.1fs]\n", e.epoch, e.lr, e.train_loss, e.val_loss,
                e.seconds);
    std::fflush(stdout);
  });
  std::printf("done: %zu steps, best val loss %.4f%s\n", res.total_steps, res.best_val_loss,
              res.stopped_at_floor ? " (stopped at the learning-rate floor)" : "");
  return 0;
}

int cmd_extract(Run& r, const std::string& mixture, const std::string& text, const std::string& clue_audio) {
  if (text.empty() && clue_audio.empty()) throw ConfigError("extract: give --text, --clue-audio or both");
  const std::string model_path = r.need_path("model");
  const fs::path out = r.need_path("out");
  r.input(model_path);
  r.input(mixture);
  const auto model = load_model(model_path);
  const auto enc = text_encoder(r);
  clue::ClueBundle bundle;
  if (!text.empty()) bundle.text = train::truncate_tokens(text, r.sec("train").at("max_text_tokens"));
  if (!clue_audio.empty()) {
    r.input(clue_audio);
    bundle.audio = dsp::read_wav(clue_audio);
  }
  const dsp::Waveform mix = dsp::read_wav(mixture);
  dsp::Waveform est;
  {
    num::NoGradGuard no_grad;
    est = model->extract_waveform(mix, bundle, *enc);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  dsp::write_wav(out, est);
  const char* mode = bundle.audio && bundle.text ? "text-audio" : bundle.text ? "text-only" : "audio-only";
  write_json(out.string() + ".json", run_meta(r, {{"clue", mode}, {"text", text}, {"clue_audio", clue_audio}}));
  std::printf("wrote %s (%zu samples, %s clue)\n", out.string().c_str(), est.samples.size(), mode);
  return 0;
}

std::vector<train::ClueCondition> conditions(const Run& r) {
  std::vector<train::ClueCondition> out;
  for (const auto& c : r.sec("eval").at("conditions")) out.push_back(train::parse_condition(c.get<std::string>()));
  if (out.empty()) throw ConfigError("eval.conditions is empty");
  return out;
}

int cmd_eval(Run& r) {
  const fs::path out = r.need_path("out");
  const std::string model_path = r.need_path("model");
  r.input(model_path);
  const auto model = load_model(model_path);
  const data::Corpus corpus = load_corpus(r);
  const auto mixes = load_mixtures(r);
  const auto test = data::filter_split(mixes, data::Split::kTest);
  if (test.empty()) throw DataError("no test-split mixtures in " + r.path("mixtures"));
  const auto enc = text_encoder(r);
  eval::EvalOptions opt;
  opt.conditions = conditions(r);
  opt.max_items = r.sec("eval").at("max_items");
  opt.max_text_tokens = r.sec("train").at("max_text_tokens");
  data::AudioCache cache(corpus);
  eval::EvalReport rep = eval::evaluate(*model, *enc, cache, test, opt);
  json meta = json::parse(rep.meta_json);
  if (r.sec("eval").at("discrimination").get<bool>()) {
    const auto tpl = templates(r);
    const std::size_t n = opt.max_items ? std::min(opt.max_items, test.size()) : test.size();
    json disc = json::object();
    for (auto c : opt.conditions) {
      const auto d = eval::clue_discrimination(*model, *enc, cache, tpl, std::span(test).first(n), c,
                                               r.sec("eval").at("seed"), opt.max_text_tokens);
      disc[std::string(train::condition_name(c))] = {
          {"accuracy", d.accuracy}, {"mixtures", d.mixtures}, {"ties", d.ties}, {"skipped", d.skipped}};
      std::printf("clue discrimination %-11s %.3f over %zu mixtures\n", std::string(train::condition_name(c)).c_str(),
                  d.accuracy, d.mixtures);
    }
    meta["clue_discrimination"] = disc;
  }
  meta["run"] = run_meta(r);
  rep.meta_json = meta.dump();
  rep.write(out);
  std::printf("%s", rep.to_table().c_str());
  return 0;
}

int cmd_ablate(Run& r) {
  const fs::path out = r.need_path("out");
  const data::Corpus corpus = load_corpus(r);
  const auto mixes = load_mixtures(r);
  const auto enc = text_encoder(r);
  eval::AblationBudget budget{train_config(r, 1), train_config(r, 2)};
  eval::EvalOptions opt;
  opt.max_items = r.sec("eval").at("max_items");
  opt.max_text_tokens = budget.stage1.max_text_tokens;
  const auto arms = eval::default_arms();
  auto table = eval::run_ablation(model_config(r), arms, *enc, corpus, mixes, budget, out, opt,
                                  [](const std::string& m) { spdlog::info("ablation: {}", m); });
  json meta = json::parse(table.meta_json);
  meta["run"] = run_meta(r);
  table.meta_json = meta.dump();
  fs::create_directories(out);
  std::ofstream(out / "ablation.json") << table.to_json() << '\n';
  std::ofstream(out / "ablation.txt") << table.to_table();
  std::printf("%s", table.to_table().c_str());
  return 0;
}

int cmd_gradcheck(Run& r, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto entries = diag::gradcheck_suite(seed);
  bool ok = true;
  json rows = json::array();
  for (const auto& e : entries) {
    std::printf("%-34s %-4s err %.3e  tol %.0e  probes %zu%s%s\n", e.name.c_str(), e.ok() ? "ok" : "FAIL", e.error,
                e.tolerance, e.probes, e.ok() ? "" : "  worst ", e.ok() ? "" : e.worst.c_str());
    ok = ok && e.ok();
    rows.push_back({{"name", e.name}, {"error", e.error}, {"tolerance", e.tolerance}, {"ok", e.ok()}});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%zu checks in %.1f s: %s\n", entries.size(), secs, ok ? "all within tolerance" : "FAILED");
  if (const std::string out = r.path("out"); !out.empty())
    write_json(fs::path(out) / "gradcheck.json", run_meta(r, {{"checks", rows}, {"seconds", secs}}));
  return ok ? 0 : 4;
}

}  // namespace

std::string content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string body = ss.str();
  const std::string blob = "blob " + std::to_string(body.size()) + std::string(1, '\0') + body;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  std::string hex;
  char buf[3];
  for (unsigned char b : digest) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    hex += buf;
  }
  return hex;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"cluesep: target speech extraction from text and audio clues"};
  app.require_subcommand(1);
  std::string config_path, log_level = "info";
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "JSON config file (merged over the defaults)");
  app.add_option("--set", sets, "override a config key, e.g. --set train.batch_size=8")->take_all();
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error");

  struct Flag {
    CLI::App* sub;
    CLI::Option* opt;
    std::string key;
    bool as_string;
    std::string value;
  };
  std::vector<std::unique_ptr<Flag>> flags;
  auto flag = [&flags](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help,
                       bool as_string = false) {
    auto f = std::make_unique<Flag>();
    f->sub = sub;
    f->key = key;
    f->as_string = as_string;
    f->opt = sub->add_option(name, f->value, help);
    flags.push_back(std::move(f));
  };

  auto* synth = app.add_subcommand("synth-corpus", "render the synthetic attribute-labelled corpus");
  flag(synth, "--out", "paths.out", "output directory", true);
  flag(synth, "--speakers", "corpus.speakers", "number of speakers");
  flag(synth, "--utterances", "corpus.utterances", "utterances per speaker");
  flag(synth, "--seed", "corpus.seed", "corpus seed");
  flag(synth, "--variation", "corpus.variation", "full | pitch-families", true);

  auto* mixgen = app.add_subcommand("mixgen", "generate two-talker mixtures, splits and statistics");
  flag(mixgen, "--manifest", "paths.manifest", "utterance manifest (JSONL)", true);
  flag(mixgen, "--out", "paths.out", "output directory", true);
  flag(mixgen, "--n", "data.n_mixtures", "number of mixtures");
  flag(mixgen, "--seed", "data.mix_seed", "mixture seed");
  flag(mixgen, "--split-seed", "data.split_seed", "split seed");
  flag(mixgen, "--templates", "paths.templates", "clue template file", true);

  int stage = 1;
  bool resume = false;
  auto* trn = app.add_subcommand("train", "train one stage of the two-stage regimen");
  trn->add_option("--stage", stage, "1 or 2")->required()->check(CLI::Range(1, 2));
  trn->add_flag("--resume", resume, "continue from <out>/last.ckpt");
  flag(trn, "--manifest", "paths.manifest", "utterance manifest", true);
  flag(trn, "--mixtures", "paths.mixtures", "mixtures JSONL from mixgen", true);
  flag(trn, "--out", "paths.out", "run directory", true);
  flag(trn, "--init-from", "paths.init_from", "stage-1 checkpoint (stage 2)", true);
  flag(trn, "--text-embeddings", "paths.text_embeddings", "precomputed text embeddings JSONL", true);

  std::string mixture_wav, text, clue_wav;
  auto* ext = app.add_subcommand("extract", "extract the clued speaker from a mixture WAV");
  ext->add_option("--mixture", mixture_wav, "mixture WAV (8 kHz mono)")->required();
  ext->add_option("--text", text, "text clue");
  ext->add_option("--clue-audio", clue_wav, "reference audio clue WAV");
  flag(ext, "--model", "paths.model", "checkpoint", true);
  flag(ext, "--out", "paths.out", "output WAV", true);
  flag(ext, "--text-embeddings", "paths.text_embeddings", "precomputed text embeddings JSONL", true);

  auto* ev = app.add_subcommand("eval", "stratified SI-SDRi report on the test split");
  flag(ev, "--model", "paths.model", "checkpoint", true);
  flag(ev, "--manifest", "paths.manifest", "utterance manifest", true);
  flag(ev, "--mixtures", "paths.mixtures", "mixtures JSONL", true);
  flag(ev, "--out", "paths.out", "report directory", true);
  flag(ev, "--max-items", "eval.max_items", "cap on test mixtures (0 = all)");
  flag(ev, "--text-embeddings", "paths.text_embeddings", "precomputed text embeddings JSONL", true);

  auto* abl = app.add_subcommand("ablate", "fusion/pooling ablation, one toy model per arm");
  flag(abl, "--manifest", "paths.manifest", "utterance manifest", true);
  flag(abl, "--mixtures", "paths.mixtures", "mixtures JSONL", true);
  flag(abl, "--out", "paths.out", "work directory", true);
  flag(abl, "--max-items", "eval.max_items", "cap on test mixtures (0 = all)");

  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  gc->add_option("--seed", gc_seed, "probe seed");
  flag(gc, "--out", "paths.out", "write gradcheck.json here", true);

  // Global options may appear anywhere, before or after the subcommand.
  std::vector<std::string> rest;
  try {
    for (std::size_t i = 0; i < args.size(); ++i) {
      const std::string& a = args[i];
      std::string* dst = nullptr;
      std::string name = a, value;
      if (const auto eq = a.find('='); a.starts_with("--") && eq != std::string::npos) {
        name = a.substr(0, eq);
        value = a.substr(eq + 1);
      }
      if (name == "--config") dst = &config_path;
      if (name == "--log-level") dst = &log_level;
      if (name != "--set" && !dst) {
        rest.push_back(a);
        continue;
      }
      if (name == a) {
        if (i + 1 >= args.size()) throw CLI::ArgumentMismatch(name, 1, 0);
        value = args[++i];
      }
      if (dst) {
        *dst = value;
      } else {
        sets.push_back(value);
      }
    }
    std::vector<std::string> argv(rest.rbegin(), rest.rend());
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    Run r;
    r.command = app.get_subcommands().front()->get_name();
    r.config = default_config();
    const json defaults = r.config;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot read config " + config_path);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError(config_path + ": " + e.what());
      }
      for (const auto& [k, v] : file.items())
        if (!r.config.contains(k)) throw ConfigError(config_path + ": unknown section '" + k + "'");
      r.config.merge_patch(file);
      r.input(config_path);
    }
    for (const auto& f : flags)
      if (f->opt->count() > 0 && f->sub == app.get_subcommands().front())
        set_path(r.config, f->key, parse_value(f->value, f->as_string));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      set_path(r.config, s.substr(0, eq), parse_value(s.substr(eq + 1), false));
    }
    r.overrides = json::object();
    diff_leaves(defaults, r.config, "", r.overrides);
    for (const auto& [k, v] : r.overrides.items()) spdlog::info("override {} = {}", k, v.dump());
    if (resume) r.config["resume"] = true;

    if (r.command == "synth-corpus") return cmd_synth_corpus(r);
    if (r.command == "mixgen") return cmd_mixgen(r);
    if (r.command == "train") return cmd_train(r, stage);
    if (r.command == "extract") return cmd_extract(r, mixture_wav, text, clue_wav);
    if (r.command == "eval") return cmd_eval(r);
    if (r.command == "ablate") return cmd_ablate(r);
    if (r.command == "gradcheck") return cmd_gradcheck(r, gc_seed);
    throw ConfigError("unknown command " + r.command);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    spdlog::error("filesystem: {}", e.what());
    return 3;
  } catch (const json::exception& e) {
    spdlog::error("config: {}", e.what());
    return 2;
  }
}

}  // namespace cluesep::cli
