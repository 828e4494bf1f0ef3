// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairdiff/bias_gate.hpp"
#include "fairdiff/calibration.hpp"
#include "fairdiff/error.hpp"
#include "fairdiff/fairness.hpp"
#include "fairdiff/kernels.hpp"
#include "fairdiff/parallel.hpp"
#include "fairdiff/synthetic.hpp"
#include "fairdiff/toy_experiment.hpp"

#ifndef FAIRDIFF_VERSION
#define FAIRDIFF_VERSION "0.0.0"
#endif

namespace fairdiff::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Written as <output>.manifest.json beside every output of a run.
class Manifest {
 public:
  explicit Manifest(std::string subcommand)
      : subcommand_(std::move(subcommand)), start_(std::chrono::steady_clock::now()) {}

  ordered_json& config() { return config_; }
  ordered_json& seeds() { return seeds_; }

  void input(const fs::path& path) {
    inputs_.push_back({{"path", path.string()}, {"fnv1a64", hex64(fnv1a64(read_file_bytes(path)))}});
  }
  void output(const fs::path& path) { outputs_.push_back(path); }

  void write() const {
    ordered_json j;
    j["subcommand"] = subcommand_;
    j["tool_version"] = FAIRDIFF_VERSION;
    j["config"] = config_;
    j["seeds"] = seeds_.is_null() ? ordered_json::object() : seeds_;
    j["inputs"] = inputs_.is_null() ? ordered_json::array() : inputs_;
    ordered_json outs = ordered_json::array();
    for (const auto& p : outputs_) outs.push_back(p.string());
    j["outputs"] = outs;
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const std::string text = j.dump(2) + "\n";
    for (const auto& p : outputs_) write_file_bytes(fs::path(p.string() + ".manifest.json"), text);
  }

 private:
  std::string subcommand_;
  std::chrono::steady_clock::time_point start_;
  ordered_json config_ = ordered_json::object();
  ordered_json seeds_;
  ordered_json inputs_;
  std::vector<fs::path> outputs_;
};

SimilarityKind similarity_or_throw(const std::string& name) {
  auto kind = parse_similarity(name);
  require(kind.has_value(), Errc::invalid_argument, "unknown similarity '" + name + "'");
  return *kind;
}

std::vector<double> parse_lambdas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      require(used == item.size(), Errc::invalid_argument, "bad lambda '" + item + "'");
      out.push_back(v);
    } catch (const std::logic_error&) {
      fail(Errc::invalid_argument, "bad lambda '" + item + "'");
    }
  }
  require(!out.empty(), Errc::invalid_argument, "no lambdas given");
  return out;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

GateInputs load_gate_inputs(const fs::path& prompts, const fs::path& male, const fs::path& female,
                            Manifest& m) {
  m.input(prompts);
  m.input(male);
  m.input(female);
  return GateInputs(load_embedding_set(prompts), load_embedding_set(male),
                    load_embedding_set(female));
}

// Options shared by the toy-model subcommands: a JSON config plus overrides.
struct ToyOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> pretrain_steps;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> samples;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Toy config JSON (defaults apply to missing keys)");
    app->add_option("--seed", seed, "Override the config seed");
    app->add_option("--pretrain-steps", pretrain_steps, "Override pretrain_steps");
    app->add_option("--steps", steps, "Override expert fine-tuning steps");
    app->add_option("--samples", samples, "Override samples_per_concept");
  }

  ToyConfig resolve(Manifest& m) const {
    ToyConfig c;
    if (!config.empty()) {
      m.input(config);
      c = load_toy_config(config);
    }
    if (seed) c.seed = *seed;
    if (pretrain_steps) c.pretrain_steps = *pretrain_steps;
    if (steps) c.expert.steps = *steps;
    if (samples) c.samples_per_concept = *samples;
    c.validate();
    m.config()["toy"] = ordered_json::parse(toy_config_json(c));
    m.seeds() = {{"seed", c.seed},
                 {"world", c.seed_for("world")},
                 {"model", c.seed_for("model")},
                 {"pretrain", c.seed_for("pretrain")},
                 {"male", c.seed_for("male")},
                 {"female", c.seed_for("female")},
                 {"sample", c.seed_for("sample")}};
    return c;
  }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::size_t threads;
};

// ---------------------------------------------------------------------------

struct CalibrateCmd {
  std::string pairs, out;
  double lambda = 4000.0;

  void attach(CLI::App* app) {
    app->add_option("--pairs", pairs, "EMBD pair file (consecutive rows form pairs)")->required();
    app->add_option("--lambda", lambda, "Regularization strength");
    app->add_option("--out", out, "Output CMAT path")->required();
  }

  int run(Context& ctx) const {
    Manifest m("calibrate");
    m.config() = {{"pairs", pairs}, {"lambda", lambda}, {"out", out}};
    m.input(pairs);
    const auto set = load_embedding_set(pairs);
    const auto c = build_calibration(PromptPairSet::from_rows(set), lambda);
    save_calibration(c, out);
    m.output(out);
    m.write();
    ctx.out << "calibration d=" << c.dim() << " lambda=" << lambda << " from " << set.size() / 2
            << " pairs -> " << out << "\n";
    return kExitOk;
  }
};

struct GateCmd {
  std::string calib, prompts, male, female, out, similarity = "pearson";
  double threshold = 0.0;

  void attach(CLI::App* app) {
    app->add_option("--calib", calib, "CMAT calibration matrix")->required();
    app->add_option("--prompts", prompts, "EMBD prompt embeddings")->required();
    app->add_option("--male", male, "EMBD male-variant embeddings")->required();
    app->add_option("--female", female, "EMBD female-variant embeddings")->required();
    app->add_option("--threshold", threshold, "Activation threshold on |skew|");
    app->add_option("--similarity", similarity,
                    "pearson | cosine | neg_euclidean | neg_manhattan | jaccard");
    app->add_option("--out", out, "Output decisions CSV")->required();
  }

  int run(Context& ctx) const {
    Manifest m("gate");
    m.config() = {{"calib", calib},         {"prompts", prompts},   {"male", male},
                  {"female", female},       {"threshold", threshold}, {"similarity", similarity},
                  {"out", out},             {"threads", ctx.threads}};
    m.input(calib);
    const auto c = load_calibration(calib);
    const auto inputs = load_gate_inputs(prompts, male, female, m);
    const GateConfig config{c.lambda(), similarity_or_throw(similarity), threshold};
    const auto decisions = run_gate(inputs, c, config, ctx.threads);
    write_file_bytes(out, format_decisions_csv(decisions));
    m.output(out);
    m.write();
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& d : decisions) ++counts[static_cast<int>(d.verdict)];
    ctx.out << decisions.size() << " prompts: male " << counts[0] << ", female " << counts[1]
            << ", none " << counts[2] << " -> " << out << "\n";
    return kExitOk;
  }
};

struct SweepCmd {
  std::string pairs, prompts, male, female, labels, out, similarity = "pearson";
  std::string lambdas = "0,1,10,50,100,500,1000,2000,4000,8000";
  double threshold = 0.0;

  void attach(CLI::App* app) {
    app->add_option("--pairs", pairs, "EMBD pair file")->required();
    app->add_option("--prompts", prompts, "EMBD prompt embeddings")->required();
    app->add_option("--male", male, "EMBD male-variant embeddings")->required();
    app->add_option("--female", female, "EMBD female-variant embeddings")->required();
    app->add_option("--labels", labels, "Skew label CSV (occupation,male_count,female_count)")
        ->required();
    app->add_option("--lambdas", lambdas, "Comma-separated lambda grid");
    app->add_option("--similarity", similarity, "Similarity for the gate");
    app->add_option("--threshold", threshold, "Activation threshold on |skew|");
    app->add_option("--out", out, "Optional sweep CSV (lambda,correct,total,accuracy)");
  }

  int run(Context& ctx) const {
    Manifest m("sweep-lambda");
    m.config() = {{"pairs", pairs},   {"prompts", prompts},       {"male", male},
                  {"female", female}, {"labels", labels},         {"lambdas", lambdas},
                  {"similarity", similarity}, {"threshold", threshold}, {"out", out}};
    m.input(pairs);
    m.input(labels);
    const auto pair_set = PromptPairSet::from_rows(load_embedding_set(pairs));
    const auto inputs = load_gate_inputs(prompts, male, female, m);
    const auto table = load_label_table(labels);
    const auto rows = sweep_lambda(pair_set, inputs, table, parse_lambdas(lambdas),
                                   similarity_or_throw(similarity), threshold, ctx.threads);
    ctx.out << "lambda        accuracy  (correct/total)\n";
    for (const auto& r : rows) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%-12g  %.4f    (%zu/%zu)\n", r.lambda, r.accuracy(),
                    r.correct, r.total);
      ctx.out << buf;
    }
    const auto& best = rows[best_sweep_row(rows)];
    ctx.out << "best lambda " << best.lambda << " accuracy " << fmt("%.4f", best.accuracy())
            << "\n";
    if (!out.empty()) {
      write_file_bytes(out, format_sweep_csv(rows));
      m.output(out);
      m.write();
    }
    return kExitOk;
  }
};

struct GateEvalCmd {
  std::string calib, prompts, male, female, labels, out, similarity = "pearson";
  double threshold = 0.0;
  bool baseline = false;

  void attach(CLI::App* app) {
    app->add_option("--calib", calib, "CMAT calibration matrix (not needed with --baseline)");
    app->add_option("--prompts", prompts, "EMBD prompt embeddings")->required();
    app->add_option("--male", male, "EMBD male-variant embeddings")->required();
    app->add_option("--female", female, "EMBD female-variant embeddings")->required();
    app->add_option("--labels", labels, "Skew label CSV")->required();
    app->add_option("--similarity", similarity, "Similarity for the gate");
    app->add_option("--threshold", threshold, "Activation threshold on |skew|");
    app->add_flag("--baseline", baseline,
                  "Score sim(z0, z_male) - sim(z0, z_female) without calibration");
    app->add_option("--out", out, "Optional decisions CSV");
  }

  int run(Context& ctx) const {
    Manifest m("gate-eval");
    m.config() = {{"calib", calib},   {"prompts", prompts},   {"male", male},
                  {"female", female}, {"labels", labels},     {"similarity", similarity},
                  {"threshold", threshold}, {"baseline", baseline}, {"out", out}};
    require(baseline || !calib.empty(), Errc::invalid_argument,
            "gate-eval needs --calib unless --baseline is given");
    const auto inputs = load_gate_inputs(prompts, male, female, m);
    m.input(labels);
    const auto table = load_label_table(labels);
    const auto kind = similarity_or_throw(similarity);
    std::vector<GateDecision> decisions;
    if (baseline) {
      decisions = run_baseline_gate(inputs, kind, threshold);
    } else {
      m.input(calib);
      const auto c = load_calibration(calib);
      decisions = run_gate(inputs, c, GateConfig{c.lambda(), kind, threshold}, ctx.threads);
    }
    const auto eval = evaluate_gate(decisions, table);
    ctx.out << "accuracy " << fmt("%.4f", eval.accuracy()) << " (" << eval.correct << "/"
            << eval.total << ")\n";
    if (!out.empty()) {
      write_file_bytes(out, format_decisions_csv(decisions));
      m.output(out);
      m.write();
    }
    return kExitOk;
  }
};

struct PretrainCmd {
  ToyOptions toy;
  std::string out;

  void attach(CLI::App* app) {
    toy.attach(app);
    app->add_option("--out", out, "Output TDEN base checkpoint")->required();
  }

  int run(Context& ctx) const {
    Manifest m("pretrain");
    const auto config = toy.resolve(m);
    const auto world = build_world(config);
    const auto result = run_pretrain(config, world);
    save_denoiser(result.model, out);
    m.output(out);
    m.write();
    ctx.out << "pretrain loss " << fmt("%.4f", result.report.initial_loss) << " -> "
            << fmt("%.4f", result.report.final_loss) << " over " << result.report.steps
            << " steps -> " << out << "\n";
    return kExitOk;
  }
};

struct TrainExpertsCmd {
  ToyOptions toy;
  std::string base, out_dir;

  void attach(CLI::App* app) {
    toy.attach(app);
    app->add_option("--base", base, "TDEN base checkpoint (read only)")->required();
    app->add_option("--out-dir", out_dir, "Directory for male.bias and female.bias")->required();
  }

  int run(Context& ctx) const {
    Manifest m("train-experts");
    const auto config = toy.resolve(m);
    m.input(base);
    const std::string before = read_file_bytes(base);
    const auto model = decode_denoiser(before);
    require(model.dims() == config.dims, Errc::invalid_argument,
            "base checkpoint dims do not match the config");
    const auto world = build_world(config);
    const auto experts = run_train_experts(config, world, model, ctx.threads);
    require(read_file_bytes(base) == before, Errc::io, "base checkpoint changed during training");

    fs::create_directories(out_dir);
    const auto dims = config.dims.attention_dims();
    const fs::path male_path = fs::path(out_dir) / "male.bias";
    const fs::path female_path = fs::path(out_dir) / "female.bias";
    save_adapter(male_path, kMaleExpert, dims, experts.male);
    save_adapter(female_path, kFemaleExpert, dims, experts.female);
    m.output(male_path);
    m.output(female_path);
    m.write();
    for (const auto& [name, r] : {std::pair{"male", experts.male_report},
                                  std::pair{"female", experts.female_report}}) {
      ctx.out << name << " expert held-out loss " << fmt("%.4f", r.initial_loss) << " -> "
              << fmt("%.4f", r.final_loss) << "\n";
    }
    ctx.out << "adapters -> " << male_path.string() << ", " << female_path.string() << "\n";
    return kExitOk;
  }
};

struct SampleCmd {
  ToyOptions toy;
  std::string base, male, female, pipeline, calib, verdict, out, labels_out;

  void attach(CLI::App* app) {
    toy.attach(app);
    app->add_option("--pipeline", pipeline,
                    "Pipeline config JSON (routing, gate, special_token_enabled, checkpoints)");
    app->add_option("--base", base, "TDEN base checkpoint");
    app->add_option("--male", male, "BIAS male expert (omit both experts for base-only)");
    app->add_option("--female", female, "BIAS female expert");
    app->add_option("--calib", calib, "CMAT for the gate (default: built from the world pairs)");
    app->add_option("--verdict", verdict, "Force a verdict for every concept: male|female|none");
    app->add_option("--out", out, "Output samples CSV (concept,sample_index,attribute,verdict)")
        ->required();
    app->add_option("--labels-out", labels_out,
                    "Optional label table CSV (occupation,image_id,label) for eval-fairness");
  }

  int run(Context& ctx) const {
    Manifest m("sample");
    auto config = toy.resolve(m);
    std::string base_path = base, male_path = male, female_path = female, calib_path = calib;
    if (!pipeline.empty()) {
      m.input(pipeline);
      const auto p = load_pipeline_config(pipeline);
      config.routing = p.routing;
      config.gate = p.gate;
      if (p.special_token_enabled) config.special_token_enabled = *p.special_token_enabled;
      if (base_path.empty() && p.base) base_path = p.base->string();
      if (male_path.empty() && p.male) male_path = p.male->string();
      if (female_path.empty() && p.female) female_path = p.female->string();
      if (calib_path.empty() && p.calibration) calib_path = p.calibration->string();
      m.config()["pipeline"] = ordered_json::parse(read_file_bytes(pipeline));
    }
    require(!base_path.empty(), Errc::invalid_argument, "sample needs --base (or a pipeline base)");
    require(male_path.empty() == female_path.empty(), Errc::invalid_argument,
            "give both expert checkpoints or neither");
    std::optional<Verdict> forced;
    if (!verdict.empty()) {
      forced = parse_verdict(verdict);
      require(forced.has_value(), Errc::invalid_argument, "unknown verdict '" + verdict + "'");
    }

    const auto world = build_world(config);
    m.input(base_path);
    auto model = load_denoiser(base_path);
    require(model.dims() == config.dims, Errc::invalid_argument,
            "base checkpoint dims do not match the config");
    std::optional<CalibrationMatrix> c;
    if (!calib_path.empty()) {
      m.input(calib_path);
      c = load_calibration(calib_path);
    } else {
      c = build_world_calibration(world, config);
    }
    std::optional<ExpertRegistry> registry;
    if (!male_path.empty()) {
      m.input(male_path);
      m.input(female_path);
      registry = ExpertRegistry::load(base_path, male_path, female_path);
    }
    const auto samples = sample_world(config, world, model, registry ? &*registry : nullptr, *c,
                                      forced, ctx.threads);
    write_file_bytes(out, format_samples_csv(to_sample_records(world, samples)));
    m.output(out);
    if (!labels_out.empty()) {
      write_file_bytes(labels_out, format_label_csv(to_label_table(world, samples)));
      m.output(labels_out);
    }
    m.write();
    std::size_t total = 0;
    for (const auto& s : samples) total += s.samples.size();
    ctx.out << total << " samples over " << samples.size() << " concepts -> " << out << "\n";
    return kExitOk;
  }
};

struct EvalFairnessCmd {
  std::string labels, attribute = "male", attributes = "male,female", out;

  void attach(CLI::App* app) {
    app->add_option("--labels", labels, "Label table CSV (occupation,image_id,label)")->required();
    app->add_option("--attribute", attribute, "Attribute to report");
    app->add_option("--attributes", attributes, "Comma-separated attribute set");
    app->add_option("--out", out, "Optional report JSON");
  }

  int run(Context& ctx) const {
    Manifest m("eval-fairness");
    m.config() = {{"labels", labels}, {"attribute", attribute}, {"attributes", attributes},
                  {"out", out},       {"threads", ctx.threads}};
    std::vector<std::string> names;
    std::stringstream ss(attributes);
    for (std::string item; std::getline(ss, item, ',');) names.push_back(item);
    const AttributeSet attrs(names);
    m.input(labels);
    const auto table = load_label_csv(labels, attrs);
    const auto report = fairness_score(table, attribute, ctx.threads);
    ctx.out << format_fairness_table(report, attrs);
    if (!out.empty()) {
      write_file_bytes(out, format_fairness_json(report, attrs));
      m.output(out);
      m.write();
    }
    return kExitOk;
  }
};

struct DemoCmd {
  ToyOptions toy;
  std::string out;

  void attach(CLI::App* app) {
    toy.attach(app);
    app->add_option("--out", out, "Optional report JSON");
  }

  int run(Context& ctx) const {
    Manifest m("demo-e2e");
    const auto config = toy.resolve(m);
    const auto result =
        run_e2e(config, ctx.threads, [&](std::string_view s) { ctx.err << "[demo] " << s << "\n"; });
    ctx.out << "gate verdicts correct " << result.gate_correct << "/" << result.decisions.size()
            << "\n";
    ctx.out << "fairness before " << fmt("%.4f", result.before.score) << " (std "
            << fmt("%.4f", result.before.std) << ")\n";
    ctx.out << "fairness after  " << fmt("%.4f", result.after.score) << " (std "
            << fmt("%.4f", result.after.std) << ")\n";
    if (!out.empty()) {
      write_file_bytes(out, e2e_report_json(config, result));
      m.output(out);
      m.write();
    }
    return kExitOk;
  }
};

struct MakeFixturesCmd {
  std::string out_dir;
  std::uint64_t seed = 1234;
  std::size_t occupations = 100;
  std::size_t dim = 32;

  void attach(CLI::App* app) {
    app->add_option("--out-dir", out_dir, "Directory for the planted gate fixtures")->required();
    app->add_option("--seed", seed, "Planted world seed");
    app->add_option("--occupations", occupations, "Number of occupations");
    app->add_option("--dim", dim, "Embedding dimension");
  }

  int run(Context& ctx) const {
    Manifest m("make-fixtures");
    m.config() = {{"out_dir", out_dir}, {"seed", seed}, {"occupations", occupations}, {"dim", dim}};
    m.seeds() = {{"seed", seed}};
    PlantedGateConfig config;
    config.seed = seed;
    config.occupations = occupations;
    config.dim = dim;
    const auto world = make_planted_gate_world(config);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    auto save = [&](const EmbeddingSet& set, const char* name) {
      save_embedding_set(set, dir / name);
      m.output(dir / name);
    };
    save(world.pair_rows, "pairs.embd");
    save(world.prompts, "prompts.embd");
    save(world.male, "male.embd");
    save(world.female, "female.embd");
    // A single female-skewed prompt triple over the same pair geometry.
    const auto nurse = make_planted_gate_world(config, {"nurse"}, {-0.4});
    save(nurse.prompts, "nurse_prompt.embd");
    save(nurse.male, "nurse_male.embd");
    save(nurse.female, "nurse_female.embd");
    write_file_bytes(dir / "skew_labels.csv", format_label_table_csv(world.labels));
    m.output(dir / "skew_labels.csv");
    // Every image of every occupation labelled male: fairness score 0.5.
    std::vector<LabelRow> rows;
    for (std::size_t i = 0; i < world.prompts.size(); ++i)
      for (std::size_t j = 0; j < 10; ++j) {
        char id[16];
        std::snprintf(id, sizeof id, "%05zu", j);
        rows.push_back({world.prompts.label(i), id, "male"});
      }
    write_file_bytes(dir / "all_male_labels.csv",
                     format_label_csv(LabelTable(rows, AttributeSet::gender())));
    m.output(dir / "all_male_labels.csv");
    m.write();
    ctx.out << "planted gate world (" << occupations << " occupations, d=" << dim << ") -> "
            << out_dir << "\n";
    return kExitOk;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fairdiff: bias gate, bias adapters and gated mixture-of-experts sampling",
               "fairdiff"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", FAIRDIFF_VERSION);
  std::size_t threads = default_threads();
  std::string simd = "auto";
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--simd", simd, "Kernel backend: auto | scalar | avx2 | neon");

  CalibrateCmd calibrate;
  GateCmd gate;
  SweepCmd sweep;
  GateEvalCmd gate_eval;
  PretrainCmd pretrain;
  TrainExpertsCmd train;
  SampleCmd sample_cmd;
  EvalFairnessCmd eval;
  DemoCmd demo;
  MakeFixturesCmd fixtures;

  std::vector<std::pair<CLI::App*, std::function<int(Context&)>>> commands;
  auto add = [&](auto& cmd, const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.attach(sub);
    commands.emplace_back(sub, [&cmd](Context& ctx) { return cmd.run(ctx); });
  };
  add(calibrate, "calibrate", "Build a calibration matrix from prompt pairs");
  add(gate, "gate", "Classify prompts as male-, female- or not skewed");
  add(sweep, "sweep-lambda", "Gate accuracy over a lambda grid");
  add(gate_eval, "gate-eval", "Gate accuracy against majority-skew labels");
  add(pretrain, "pretrain", "Pre-train the biased toy base model");
  add(train, "train-experts", "Fine-tune the male and female bias adapters");
  add(sample_cmd, "sample", "Sample every toy concept, optionally through the gated experts");
  add(eval, "eval-fairness", "Statistical-parity fairness of a label table");
  add(demo, "demo-e2e", "World, pre-training, experts, gated sampling and fairness in one run");
  add(fixtures, "make-fixtures", "Write a planted-bias gate fixture set");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << FAIRDIFF_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand --help surfaces here as CallForHelp from the subcommand.
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      for (const auto& [sub, fn] : commands) {
        if (sub->parsed()) {
          out << sub->help();
          return kExitOk;
        }
      }
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (simd != "auto") {
      const auto backend = kernels::parse_backend(simd);
      require(backend.has_value(), Errc::invalid_argument, "unknown backend '" + simd + "'");
      kernels::set_backend(*backend);
    }
    Context ctx{out, err, threads};
    for (const auto& [sub, fn] : commands)
      if (sub->parsed()) return fn(ctx);
    err << "error: no subcommand\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == Errc::divergence ? kExitDivergence : kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

}  // namespace fairdiff::cli
