// Copyright 2026 The com2s Authors
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

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "com2s/corpus.hpp"
#include "com2s/emgsig.hpp"
#include "com2s/error.hpp"
#include "com2s/evalkit.hpp"
#include "com2s/selftrain.hpp"
#include "com2s/simgen.hpp"
#include "com2s/sweep.hpp"
#include "com2s/transduce.hpp"
#include "config.hpp"

#ifndef COM2S_VERSION
#define COM2S_VERSION "unknown"
#endif

namespace com2s::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string manifest;
  std::string model;
  std::string init;
  std::string validation;
  std::string scores;
  std::string real;
  std::string synthetic;
  std::string lexicon;
  std::string csv;
  std::string split = "test";
  std::string threshold;
  std::optional<double> fraction;
  std::optional<std::size_t> total;
  std::optional<std::uint64_t> mix_seed;
  std::optional<std::size_t> n;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<double> lambda;
  std::optional<std::uint32_t> rate;
  std::size_t jobs = 1;
  std::vector<std::uint64_t> seeds;
  bool record_timing = false;
  bool scratch_comparison = false;
  std::vector<std::string> results;
  std::string ratings;
};

struct Context {
  const Options& opts;
  const std::vector<std::string>& args;
  std::string command;
  std::ostream& out;
  std::ostream& err;
};

std::optional<std::uint64_t> env_seed() {
  const char* text = std::getenv("COM2S_SEED");
  if (!text || !*text) return std::nullopt;
  std::uint64_t value = 0;
  const char* end = text + std::char_traits<char>::length(text);
  const auto [ptr, ec] = std::from_chars(text, end, value);
  if (ec != std::errc() || ptr != end)
    fail(ErrorKind::validation, std::string("COM2S_SEED is not an unsigned integer: '") + text + "'");
  return value;
}

// Precedence: built-in defaults < config file < COM2S_SEED < --seed.
RunConfig resolve(const Options& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (const auto s = env_seed()) rc.bench.seed = *s;
  if (o.seed) rc.bench.seed = *o.seed;
  rc.validate();
  return rc;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

void write_run_record(const Context& ctx, const fs::path& path, const RunConfig& rc, ojson extra = ojson::object()) {
  ojson j;
  j["tool"] = "com2s";
  j["version"] = COM2S_VERSION;
  j["command"] = ctx.command;
  j["arguments"] = ctx.args;
  j["seed"] = rc.bench.seed;
  for (auto& [k, v] : extra.items()) j[k] = v;
  j["config"] = to_json(rc);
  write_text(path, j.dump(2) + "\n");
}

fs::path beside(const std::string& file, const char* suffix) { return fs::path(file + suffix); }

void load_dataset(const std::string& path, const phonemics::PhonemeInventory& inv, corpus::UtteranceStore& store,
                  corpus::DatasetManifest& manifest) {
  manifest = corpus::load_manifest(path);
  corpus::load_into(store, manifest, inv);
}

void apply_train_overrides(const Options& o, transduce::TrainConfig& tc) {
  if (o.epochs) tc.epochs = *o.epochs;
  if (o.batch_size) tc.batch_size = *o.batch_size;
  if (o.learning_rate) tc.learning_rate = *o.learning_rate;
  if (o.lambda) tc.loss_mix_lambda = *o.lambda;
}

std::string history_csv(const transduce::TrainResult& r) {
  std::ostringstream s;
  s.precision(12);
  s << "epoch,loss,validation_loss\n";
  for (std::size_t e = 0; e < r.loss_history.size(); ++e) {
    s << e + 1 << ',' << r.loss_history[e] << ',';
    if (e < r.validation_history.size()) s << r.validation_history[e];
    s << '\n';
  }
  return s.str();
}

int cmd_gen(const Context& ctx, bool synthetic) {
  const auto& o = ctx.opts;
  const RunConfig rc = resolve(o);
  const auto inv = rc.make_inventory();
  const auto profile = sweep::benchmark_profile(rc.bench, inv);
  const fs::path dir = o.out;
  simgen::GeneratedCorpus gc;
  if (synthetic) {
    auto spec = sweep::synthetic_corpus_spec(rc.bench, o.n.value_or(rc.gen_synthetic_utterances));
    gc = simgen::synth_generated_corpus(profile, spec);
  } else {
    gc = simgen::synth_corpus(profile, sweep::real_corpus_spec(rc.bench, o.n.value_or(rc.gen_real_utterances)));
  }
  const auto manifest = simgen::write_corpus(gc, dir, inv);
  phonemics::write_lexicon(dir / "lexicon.json", profile.lexicon, inv);
  write_run_record(ctx, dir / "run.json", rc);
  ctx.out << "wrote " << manifest.size() << (synthetic ? " synthetic" : " real") << " utterances ("
          << manifest.totals().hours * 3600.0 << " s) to " << (dir / "manifest.jsonl").string() << '\n';
  return 0;
}

int cmd_restore(const Context& ctx) {
  const auto& o = ctx.opts;
  const RunConfig rc = resolve(o);
  const auto inv = rc.make_inventory();
  corpus::UtteranceStore store;
  corpus::DatasetManifest manifest;
  load_dataset(o.manifest, inv, store, manifest);
  const std::uint32_t rate = o.rate.value_or(rc.restore_rate);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  std::vector<corpus::ManifestEntry> entries;
  for (const auto& e : manifest.entries()) {
    const auto restored = emgsig::prepare_generated(store.get(e.id), rate, rc.restore);
    entries.push_back(corpus::write_utterance(restored, dir, inv));
  }
  const corpus::DatasetManifest out_manifest(std::move(entries), dir);
  corpus::save_manifest(out_manifest, dir / "manifest.jsonl");
  write_run_record(ctx, dir / "run.json", rc, {{"target_rate", rate}});
  ctx.out << "restored " << out_manifest.size() << " utterances to " << rate << " Hz in " << dir.string() << '\n';
  return 0;
}

int cmd_train(const Context& ctx, bool continuation) {
  const auto& o = ctx.opts;
  const RunConfig rc = resolve(o);
  const auto inv = rc.make_inventory();
  corpus::UtteranceStore store;
  corpus::DatasetManifest train_set, validation;
  load_dataset(o.manifest, inv, store, train_set);
  if (!o.validation.empty()) load_dataset(o.validation, inv, store, validation);
  const auto* val = o.validation.empty() ? nullptr : &validation;

  transduce::TrainResult result = [&] {
    if (continuation) {
      auto tc = rc.bench.continue_train;
      apply_train_overrides(o, tc);
      const auto baseline = transduce::load_model(o.model);
      return selftrain::run_self_training(baseline, train_set, store, tc, val);
    }
    auto tc = rc.bench.teacher_train;
    apply_train_overrides(o, tc);
    if (o.init.empty()) return transduce::train(nullptr, train_set, store, tc, rc.bench.model, val);
    const auto init = transduce::load_model(o.init);
    // Without a config file the checkpoint defines the architecture.
    const auto mc = o.config.empty() ? init.config() : rc.bench.model;
    return transduce::train(&init, train_set, store, tc, mc, val);
  }();
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  transduce::save_model(result.model, o.out);
  write_text(beside(o.out, ".history.csv"), history_csv(result));
  write_run_record(ctx, beside(o.out, ".run.json"), rc);
  ctx.out << "trained " << result.loss_history.size() << " epochs on " << train_set.size() << " utterances";
  if (!result.loss_history.empty()) ctx.out << ", final loss " << result.loss_history.back();
  ctx.out << "; model written to " << o.out << '\n';
  return 0;
}

int cmd_score(const Context& ctx) {
  const auto& o = ctx.opts;
  const RunConfig rc = resolve(o);
  const auto inv = rc.make_inventory();
  corpus::UtteranceStore store;
  corpus::DatasetManifest manifest;
  load_dataset(o.manifest, inv, store, manifest);
  const auto teacher = transduce::load_model(o.model);
  const auto records = selftrain::score_confidence(teacher, manifest, store);
  std::ostringstream text;
  selftrain::write_scores_csv(records, text);
  write_text(o.out, text.str());
  write_run_record(ctx, beside(o.out, ".run.json"), rc);
  ctx.out << "scored " << records.size() << " utterances into " << o.out << '\n';
  return 0;
}

int cmd_filter(const Context& ctx) {
  const auto& o = ctx.opts;
  const RunConfig rc = resolve(o);
  const auto fs_spec = o.threshold.empty() ? rc.filter : parse_filter(o.threshold);
  const auto records = selftrain::read_scores_csv(o.scores);
  const auto manifest = corpus::load_manifest(o.manifest);
  const auto kept = selftrain::filter_by_threshold(records, fs_spec, manifest);
  corpus::save_manifest(kept, o.out);
  write_run_record(ctx, beside(o.out, ".run.json"), rc, {{"threshold", fs_spec.label()}});
  ctx.out << "kept " << kept.size() << " of " << manifest.size() << " utterances (threshold " << fs_spec.label()
          << ")\n";
  return 0;
}

int cmd_mix(const Context& ctx) {
  const auto& o = ctx.opts;
  const RunConfig rc = resolve(o);
  auto ms = rc.mix;
  if (o.fraction) ms.real_fraction = *o.fraction;
  if (o.total) ms.total_utterances = *o.total;
  if (o.mix_seed) ms.seed = *o.mix_seed;
  const auto real = corpus::load_manifest(o.real);
  const auto synthetic = corpus::load_manifest(o.synthetic);
  const auto mixed = selftrain::mix_datasets(real, synthetic, ms);
  corpus::save_manifest(mixed, o.out);
  write_run_record(ctx, beside(o.out, ".run.json"), rc,
                   {{"mix", {{"real_fraction", ms.real_fraction},
                             {"total_utterances", ms.total_utterances},
                             {"seed", ms.seed}}}});
  ctx.out << "mixed " << ms.real_count() << " real + " << ms.synthetic_count() << " synthetic utterances into "
          << o.out << '\n';
  return 0;
}

int cmd_eval(const Context& ctx) {
  const auto& o = ctx.opts;
  const RunConfig rc = resolve(o);
  const auto inv = rc.make_inventory();
  corpus::UtteranceStore store;
  corpus::DatasetManifest test;
  load_dataset(o.manifest, inv, store, test);
  const auto model = transduce::load_model(o.model);
  const auto lexicon = phonemics::read_lexicon(o.lexicon, inv);
  const auto report = evalkit::evaluate_model(model, test, store, lexicon, inv, o.split);
  std::ostringstream json_text;
  evalkit::write_report_json(report, inv, json_text);
  write_text(o.out, json_text.str());
  if (!o.csv.empty()) {
    std::ostringstream csv;
    evalkit::write_report_csv_header(csv);
    evalkit::write_report_csv_row(report, csv);
    write_text(o.csv, csv.str());
  }
  write_run_record(ctx, beside(o.out, ".run.json"), rc);
  ctx.out << o.split << ": WER " << report.wer << ", phoneme accuracy " << report.overall_phoneme_accuracy
          << " over " << report.n_utterances << " utterances\n";
  return 0;
}

int cmd_sweep(const Context& ctx, const std::string& kind) {
  const auto& o = ctx.opts;
  const RunConfig rc = resolve(o);
  std::vector<std::uint64_t> seeds = o.seeds;
  if (seeds.empty()) {
    if (o.seed || env_seed())
      seeds = {rc.bench.seed};
    else
      seeds = rc.sweep_seeds;
  }
  const sweep::SweepOptions sopts{o.jobs, o.record_timing};
  std::vector<sweep::ResultRow> rows, scratch_rows;
  for (const auto seed : seeds) {
    auto cfg = rc.bench;
    cfg.seed = seed;
    const auto bench = sweep::build_benchmark(cfg);
    std::vector<sweep::ResultRow> part;
    if (kind == "threshold") part = sweep::sweep_threshold(bench, sopts);
    if (kind == "ratio") part = sweep::sweep_ratio(bench, sopts);
    if (kind == "scale") part = sweep::sweep_scale(bench, sopts);
    rows.insert(rows.end(), part.begin(), part.end());
    if (kind == "scale" && o.scratch_comparison) {
      const auto extra = sweep::compare_scratch(bench, sopts);
      scratch_rows.insert(scratch_rows.end(), extra.begin(), extra.end());
    }
    ctx.err << "sweep-" << kind << ": seed " << seed << " done\n";
  }

  const fs::path dir = o.out;
  fs::create_directories(dir);
  auto emit = [&](const std::string& name, const std::vector<sweep::ResultRow>& r) {
    std::ostringstream results, summary;
    sweep::write_results_csv(r, results);
    write_text(dir / ("sweep_" + name + ".csv"), results.str());
    sweep::write_summary_csv(sweep::summarize(r), summary);
    write_text(dir / ("summary_" + name + ".csv"), summary.str());
  };
  emit(kind, rows);
  if (kind == "threshold") {
    std::ostringstream heat;
    sweep::write_heatmap_csv(rows, heat);
    write_text(dir / "heatmap_threshold.csv", heat.str());
  }
  if (!scratch_rows.empty()) emit("scratch", scratch_rows);
  write_run_record(ctx, dir / ("run_" + kind + ".json"), rc, {{"sweep_seeds", seeds}, {"jobs", o.jobs}});
  ctx.out << "wrote " << rows.size() << " rows to " << (dir / ("sweep_" + kind + ".csv")).string() << '\n';
  return 0;
}

int cmd_report(const Context& ctx) {
  const auto& o = ctx.opts;
  if (o.results.empty() && o.ratings.empty())
    fail(ErrorKind::validation, "report needs --results and/or --ratings");
  if (!o.results.empty()) {
    std::vector<sweep::ResultRow> rows;
    for (const auto& path : o.results) {
      std::ifstream in(path);
      if (!in) fail(ErrorKind::validation, "cannot open results " + path);
      const auto part = sweep::read_results_csv(in);
      rows.insert(rows.end(), part.begin(), part.end());
    }
    std::ostringstream summary;
    sweep::write_summary_csv(sweep::summarize(rows), summary);
    if (o.out.empty())
      ctx.out << summary.str();
    else
      write_text(o.out, summary.str());
  }
  if (!o.ratings.empty()) {
    const auto ratings = evalkit::read_ratings_csv(o.ratings);
    std::vector<int> values;
    for (const auto& r : ratings) values.push_back(r.rating);
    const auto mos = evalkit::aggregate_mos(values);
    ojson j{{"mean", mos.mean},
            {"stddev", mos.stddev},
            {"n_ratings", mos.n_ratings},
            {"ci95_halfwidth", mos.ci95_halfwidth}};
    ctx.out << j.dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Confidence-filtered self-training pipeline for EMG-to-speech transduction", "com2s"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", COM2S_VERSION);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run config (flags take precedence)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Global seed (overrides config and COM2S_SEED)");
  };
  auto train_flags = [&](CLI::App* sub) {
    sub->add_option("--epochs", o.epochs, "Override training epochs");
    sub->add_option("--batch-size", o.batch_size, "Override batch size");
    sub->add_option("--lr", o.learning_rate, "Override learning rate");
    sub->add_option("--lambda", o.lambda, "Override the phoneme-loss weight in [0, 1]");
  };

  std::map<std::string, std::function<int(const Context&)>> handlers;

  for (const bool synthetic : {false, true}) {
    auto* sub = app.add_subcommand(synthetic ? "gen-syn" : "gen-real",
                                   synthetic ? "Simulate generator output (tanh domain, reduced rate)"
                                             : "Simulate a real paired EMG corpus");
    common(sub);
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_option("--n", o.n, "Number of utterances");
    handlers[sub->get_name()] = [synthetic](const Context& c) { return cmd_gen(c, synthetic); };
  }
  {
    auto* sub = app.add_subcommand("restore", "Invert the tanh squashing and resample generated EMG");
    common(sub);
    sub->add_option("--manifest", o.manifest, "Generated corpus manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_option("--rate", o.rate, "Target EMG sample rate (Hz)");
    handlers["restore"] = cmd_restore;
  }
  {
    auto* sub = app.add_subcommand("train", "Train a transduction model (from scratch or --init)");
    common(sub);
    train_flags(sub);
    sub->add_option("--manifest", o.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--validation", o.validation, "Validation manifest")->check(CLI::ExistingFile);
    sub->add_option("--init", o.init, "Continue from this checkpoint")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output checkpoint path")->required();
    handlers["train"] = [](const Context& c) { return cmd_train(c, false); };
  }
  {
    auto* sub = app.add_subcommand("self-train", "Continue a baseline model on a mixed manifest");
    common(sub);
    train_flags(sub);
    sub->add_option("--model", o.model, "Baseline checkpoint")->required()->check(CLI::ExistingFile);
    sub->add_option("--manifest", o.manifest, "Mixed training manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--validation", o.validation, "Validation manifest")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output checkpoint path")->required();
    handlers["self-train"] = [](const Context& c) { return cmd_train(c, true); };
  }
  {
    auto* sub = app.add_subcommand("score", "Score synthetic utterances with a teacher model");
    common(sub);
    sub->add_option("--model", o.model, "Teacher checkpoint")->required()->check(CLI::ExistingFile);
    sub->add_option("--manifest", o.manifest, "Restored synthetic manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Scores CSV")->required();
    handlers["score"] = cmd_score;
  }
  {
    auto* sub = app.add_subcommand("filter", "Keep utterances whose per-frame loss is below a threshold");
    common(sub);
    sub->add_option("--threshold", o.threshold, "Threshold or 'raw' (default from config)");
    sub->add_option("--scores", o.scores, "Scores CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--manifest", o.manifest, "Manifest to filter")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output manifest")->required();
    handlers["filter"] = cmd_filter;
  }
  {
    auto* sub = app.add_subcommand("mix", "Mix real and synthetic manifests at a fixed proportion");
    common(sub);
    sub->add_option("--real", o.real, "Real manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--synthetic", o.synthetic, "Synthetic manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--fraction", o.fraction, "Real fraction in [0, 1]");
    sub->add_option("--total", o.total, "Total utterances");
    sub->add_option("--mix-seed", o.mix_seed, "Sampling seed");
    sub->add_option("--out", o.out, "Output manifest")->required();
    handlers["mix"] = cmd_mix;
  }
  {
    auto* sub = app.add_subcommand("eval", "Evaluate a model: WER, phoneme accuracy and confusion");
    common(sub);
    sub->add_option("--model", o.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    sub->add_option("--manifest", o.manifest, "Test manifest")->required()->check(CLI::ExistingFile);
    sub->add_option("--lexicon", o.lexicon, "Lexicon JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--split", o.split, "Split name for the report");
    sub->add_option("--out", o.out, "Report JSON")->required();
    sub->add_option("--csv", o.csv, "Also write a one-row CSV report");
    handlers["eval"] = cmd_eval;
  }
  for (const std::string kind : {"threshold", "ratio", "scale"}) {
    auto* sub = app.add_subcommand("sweep-" + kind, "Run the " + kind + " sweep on the desk benchmark");
    common(sub);
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_option("--jobs", o.jobs, "Grid points trained in parallel")->check(CLI::PositiveNumber);
    sub->add_option("--seeds", o.seeds, "Benchmark seeds (default: config sweep_seeds)")->delimiter(',');
    sub->add_flag("--record-timing", o.record_timing, "Fill wall_seconds (output no longer byte-reproducible)");
    if (kind == "scale")
      sub->add_flag("--scratch-comparison", o.scratch_comparison,
                    "Also compare real-only and 1:1 mixed from-scratch models");
    handlers[sub->get_name()] = [kind](const Context& c) { return cmd_sweep(c, kind); };
  }
  {
    auto* sub = app.add_subcommand("report", "Summarize sweep CSVs (median over seeds) and MOS ratings");
    sub->add_option("--results", o.results, "Sweep result CSVs")->check(CLI::ExistingFile);
    sub->add_option("--ratings", o.ratings, "Ratings CSV (utterance_id,rater_id,rating)")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Summary CSV (default: stdout)");
    handlers["report"] = cmd_report;
  }

  if (!args.empty() && !args[0].starts_with("-") && app.get_subcommand_no_throw(args[0]) == nullptr) {
    err << "com2s: unknown subcommand '" << args[0] << "'\n\n" << app.help();
    return 1;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << COM2S_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "com2s: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  const auto* selected = app.get_subcommands().front();
  const Context ctx{o, args, selected->get_name(), out, err};
  try {
    return handlers.at(selected->get_name())(ctx);
  } catch (const Error& e) {
    err << "com2s " << ctx.command << ": " << e.what() << '\n';
    return is_input_error(e.kind()) ? 1 : 2;
  } catch (const std::exception& e) {
    err << "com2s " << ctx.command << ": unexpected error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace com2s::cli
