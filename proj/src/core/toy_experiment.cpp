// Copyright 2026 The fairdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairdiff/toy_experiment.hpp"

#include <cstdio>
#include <thread>

#include <json.hpp>

#include "fairdiff/error.hpp"
#include "json_fields.hpp"

namespace fairdiff {

using nlohmann::ordered_json;

void ToyConfig::validate() const {
  dims.validate();
  require(world.k == dims.k && world.d_c == dims.context, Errc::invalid_argument,
          "world and model disagree on k or d_c");
  require(rank >= 1 && rank < std::min({dims.hidden, dims.context, dims.attention}),
          Errc::invalid_argument, "rank must satisfy 1 <= rank < min(d_x, d_c, d_h)");
  require(std::isfinite(adapter_alpha) && adapter_alpha > 0.0, Errc::invalid_argument,
          "adapter_alpha must be positive");
  require(steps_T >= 2, Errc::invalid_argument, "T must be at least 2");
  require(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0, Errc::invalid_argument,
          "betas must satisfy 0 < beta_min <= beta_max < 1");
  require(expert.batch >= 1 && std::isfinite(expert.lr) && expert.lr > 0.0,
          Errc::invalid_argument, "expert training needs batch >= 1 and lr > 0");
  require(std::isfinite(pretrain_lr) && pretrain_lr > 0.0, Errc::invalid_argument,
          "pretrain_lr must be positive");
  require(pretrain_token_prob >= 0.0 && pretrain_token_prob <= 1.0, Errc::invalid_argument,
          "pretrain_token_prob must lie in [0, 1]");
  require(world.p_male >= 0.0 && world.p_male <= 1.0, Errc::invalid_argument,
          "p_male must lie in [0, 1]");
  require(std::isfinite(world.sigma_world) && world.sigma_world > 0.0, Errc::invalid_argument,
          "sigma_world must be positive");
  require(world.concepts >= 1, Errc::invalid_argument, "concepts must be at least 1");
  require(samples_per_concept >= 1, Errc::invalid_argument,
          "samples_per_concept must be at least 1");
  gate.validate();
  routing.validate();
}

std::uint64_t ToyConfig::seed_for(std::string_view purpose) const noexcept {
  return derive_seed(seed, fnv1a64(purpose));
}

NoiseSchedule ToyConfig::schedule() const { return NoiseSchedule(steps_T, beta_min, beta_max); }

std::optional<std::vector<double>> ToyConfig::special_token() const {
  if (!special_token_enabled) return std::nullopt;
  return special_token_embedding(dims.context, seed_for("special_token"));
}

namespace {

ExpertWeights parse_row(const nlohmann::json& j, std::string_view name) {
  require(j.is_object(), Errc::invalid_argument,
          "routing." + std::string(name) + " must be an object");
  ExpertWeights row;
  for (const auto& [id, w] : j.items()) {
    require(w.is_number(), Errc::invalid_argument,
            "routing." + std::string(name) + "." + id + " must be a number");
    row[id] = w.get<double>();
  }
  return row;
}

ordered_json row_json(const ExpertWeights& row) {
  ordered_json j = ordered_json::object();
  for (const auto& [id, w] : row) j[id] = w;
  return j;
}

RoutingTable parse_routing_table(const nlohmann::json& j) {
  require(j.is_object(), Errc::invalid_argument, "routing must be an object");
  RoutingTable table = RoutingTable::defaults();
  for (const auto& [key, value] : j.items()) {
    if (key == "on_male_skew") {
      table.on_male_skew = parse_row(value, key);
    } else if (key == "on_female_skew") {
      table.on_female_skew = parse_row(value, key);
    } else if (key == "on_none") {
      table.on_none = parse_row(value, key);
    } else {
      fail(Errc::invalid_argument, "unknown routing key '" + key + "'");
    }
  }
  table.validate();
  return table;
}

}  // namespace

ToyConfig parse_toy_config(std::string_view json_text) {
  const auto root = detail::parse_json_object(json_text, "toy config");
  ToyConfig c;
  detail::FieldReader f(root, "toy config");
  std::size_t k = c.dims.k;
  std::size_t d_c = c.dims.context;
  f.count("k", k);
  f.count("d_c", d_c);
  c.dims.k = c.world.k = k;
  c.dims.context = c.world.d_c = d_c;
  f.count("d_x", c.dims.hidden);
  f.count("d_h", c.dims.attention);
  f.count("tokens", c.dims.tokens);
  f.count("time_width", c.dims.time_width);
  f.count("rank", c.rank);
  f.real("adapter_alpha", c.adapter_alpha);
  f.count("T", c.steps_T);
  f.real("beta_min", c.beta_min);
  f.real("beta_max", c.beta_max);
  f.real("lr", c.expert.lr);
  f.count("batch", c.expert.batch);
  f.count("steps", c.expert.steps);
  f.count("pretrain_steps", c.pretrain_steps);
  f.real("pretrain_lr", c.pretrain_lr);
  f.real("pretrain_token_prob", c.pretrain_token_prob);
  f.real("p_male", c.world.p_male);
  f.real("sigma_world", c.world.sigma_world);
  f.count("concepts", c.world.concepts);
  f.boolean("alternate_skew", c.world.alternate_skew);
  f.real("separation", c.world.separation);
  f.real("center_scale", c.world.center_scale);
  f.boolean("special_token_enabled", c.special_token_enabled);
  f.real("gate_lambda", c.gate.lambda);
  f.real("gate_threshold", c.gate.threshold);
  if (auto s = f.string("gate_similarity")) {
    auto kind = parse_similarity(*s);
    require(kind.has_value(), Errc::invalid_argument, "unknown gate_similarity '" + *s + "'");
    c.gate.similarity = *kind;
  }
  f.count("samples_per_concept", c.samples_per_concept);
  f.seed("seed", c.seed);
  if (const auto* gw = f.object("gate_world")) {
    detail::FieldReader g(*gw, "gate_world");
    auto& p = c.world.gate;
    g.count("pair_classes", p.pair_classes);
    g.real("pair_attribute", p.pair_attribute);
    g.real("pair_noise", p.pair_noise);
    g.real("skew_min", p.skew_min);
    g.real("skew_max", p.skew_max);
    g.real("variant_shift", p.variant_shift);
    g.real("variant_noise", p.variant_noise);
    g.real("prompt_noise", p.prompt_noise);
    g.finish();
  }
  if (const auto* r = f.object("routing")) c.routing = parse_routing_table(*r);
  f.finish();
  c.validate();
  return c;
}

ToyConfig load_toy_config(const std::filesystem::path& path) {
  return parse_toy_config(read_file_bytes(path));
}

std::string toy_config_json(const ToyConfig& c) {
  ordered_json j;
  j["k"] = c.dims.k;
  j["d_c"] = c.dims.context;
  j["d_x"] = c.dims.hidden;
  j["d_h"] = c.dims.attention;
  j["tokens"] = c.dims.tokens;
  j["time_width"] = c.dims.time_width;
  j["rank"] = c.rank;
  j["adapter_alpha"] = c.adapter_alpha;
  j["T"] = c.steps_T;
  j["beta_min"] = c.beta_min;
  j["beta_max"] = c.beta_max;
  j["lr"] = c.expert.lr;
  j["batch"] = c.expert.batch;
  j["steps"] = c.expert.steps;
  j["pretrain_steps"] = c.pretrain_steps;
  j["pretrain_lr"] = c.pretrain_lr;
  j["pretrain_token_prob"] = c.pretrain_token_prob;
  j["p_male"] = c.world.p_male;
  j["sigma_world"] = c.world.sigma_world;
  j["concepts"] = c.world.concepts;
  j["alternate_skew"] = c.world.alternate_skew;
  j["separation"] = c.world.separation;
  j["center_scale"] = c.world.center_scale;
  j["special_token_enabled"] = c.special_token_enabled;
  j["gate_lambda"] = c.gate.lambda;
  j["gate_threshold"] = c.gate.threshold;
  j["gate_similarity"] = std::string(similarity_name(c.gate.similarity));
  j["samples_per_concept"] = c.samples_per_concept;
  j["seed"] = c.seed;
  const auto& p = c.world.gate;
  j["gate_world"] = {{"pair_classes", p.pair_classes}, {"pair_attribute", p.pair_attribute},
                     {"pair_noise", p.pair_noise},     {"skew_min", p.skew_min},
                     {"skew_max", p.skew_max},         {"variant_shift", p.variant_shift},
                     {"variant_noise", p.variant_noise}, {"prompt_noise", p.prompt_noise}};
  j["routing"] = {{"on_male_skew", row_json(c.routing.on_male_skew)},
                  {"on_female_skew", row_json(c.routing.on_female_skew)},
                  {"on_none", row_json(c.routing.on_none)}};
  return j.dump(2) + "\n";
}

PipelineConfig parse_pipeline_config(std::string_view json_text) {
  const auto root = detail::parse_json_object(json_text, "pipeline config");
  detail::FieldReader f(root, "pipeline config");
  PipelineConfig c;
  if (const auto* r = f.object("routing")) c.routing = parse_routing_table(*r);
  if (const auto* g = f.object("gate")) {
    detail::FieldReader gr(*g, "gate");
    gr.real("lambda", c.gate.lambda);
    gr.real("threshold", c.gate.threshold);
    if (auto s = gr.string("similarity")) {
      auto kind = parse_similarity(*s);
      require(kind.has_value(), Errc::invalid_argument, "unknown gate similarity '" + *s + "'");
      c.gate.similarity = *kind;
    }
    gr.finish();
  }
  bool token = true;
  if (root.contains("special_token_enabled")) {
    f.boolean("special_token_enabled", token);
    c.special_token_enabled = token;
  }
  if (const auto* cp = f.object("checkpoints")) {
    detail::FieldReader cr(*cp, "checkpoints");
    if (auto s = cr.string("base")) c.base = *s;
    if (auto s = cr.string("male")) c.male = *s;
    if (auto s = cr.string("female")) c.female = *s;
    if (auto s = cr.string("calibration")) c.calibration = *s;
    cr.finish();
  }
  f.finish();
  c.gate.validate();
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return parse_pipeline_config(read_file_bytes(path));
}

SyntheticWorld build_world(const ToyConfig& config) {
  ToyWorldConfig w = config.world;
  w.seed = config.seed_for("world");
  return make_toy_world(w);
}

CalibrationMatrix build_world_calibration(const SyntheticWorld& world, const ToyConfig& config) {
  return build_calibration(PromptPairSet::from_rows(world.pair_rows), config.gate.lambda);
}

PretrainResult run_pretrain(const ToyConfig& config, const SyntheticWorld& world) {
  config.validate();
  auto model = ToyDenoiser::initialize(config.dims, config.seed_for("model"));
  const auto token = config.special_token();
  std::optional<std::span<const double>> token_view;
  if (token) token_view = std::span<const double>(*token);
  const TrainingConfig train{config.pretrain_steps, config.expert.batch, config.pretrain_lr,
                             config.seed_for("pretrain")};
  auto report = pretrain_base(model, world, config.schedule(), train, token_view,
                              config.pretrain_token_prob);
  return {std::move(model), report};
}

ExpertResult run_train_experts(const ToyConfig& config, const SyntheticWorld& world,
                               const ToyDenoiser& base, std::size_t threads) {
  config.validate();
  require(base.attention().adapters().empty(), Errc::invalid_argument,
          "expert training expects a base model without adapters");
  const auto token = config.special_token();
  std::optional<std::span<const double>> token_view;
  if (token) token_view = std::span<const double>(*token);
  const auto schedule = config.schedule();

  struct Job {
    std::string id;
    std::size_t attribute;
    ToyDenoiser model;
    TrainingReport report;
    std::exception_ptr error;
  };
  Job jobs[2] = {{std::string(kMaleExpert), 0, base, {}, nullptr},
                 {std::string(kFemaleExpert), 1, base, {}, nullptr}};
  auto run = [&](Job& job) {
    try {
      TrainingConfig train = config.expert;
      train.seed = config.seed_for(job.id);
      job.report = train_expert(job.model, job.id, config.rank, config.adapter_scale(), world,
                                job.attribute, schedule, train, token_view);
    } catch (...) {
      job.error = std::current_exception();
    }
  };
  if (threads > 1) {
    std::thread other([&] { run(jobs[1]); });
    run(jobs[0]);
    other.join();
  } else {
    run(jobs[0]);
    run(jobs[1]);
  }
  for (const auto& job : jobs)
    if (job.error) std::rethrow_exception(job.error);
  return {*jobs[0].model.attention().adapter(kMaleExpert),
          *jobs[1].model.attention().adapter(kFemaleExpert), jobs[0].report, jobs[1].report};
}

std::vector<ConceptSamples> sample_world(const ToyConfig& config, const SyntheticWorld& world,
                                         const ToyDenoiser& base, const ExpertRegistry* registry,
                                         const CalibrationMatrix& calibration,
                                         std::optional<Verdict> verdict_override,
                                         std::size_t threads) {
  const auto schedule = config.schedule();
  MoeSettings settings;
  settings.gate = config.gate;
  settings.routing = config.routing;
  settings.special_token = config.special_token();
  settings.threads = threads;
  const std::uint64_t seed = config.seed_for("sample");

  std::vector<ConceptSamples> out;
  out.reserve(world.concepts.size());
  for (std::size_t c = 0; c < world.concepts.size(); ++c) {
    const auto& concept_entry = world.concepts[c];
    const PromptTriple triple{concept_entry.name, concept_entry.embedding,
                              concept_entry.male_variant, concept_entry.female_variant};
    ConceptSamples cs;
    if (registry != nullptr) {
      auto r = moe_generate(*registry, calibration, settings, triple, verdict_override, schedule,
                            config.samples_per_concept, seed);
      cs.decision = std::move(r.decision);
      cs.weights = std::move(r.weights);
      cs.samples = std::move(r.samples);
    } else {
      cs.decision.prompt_label = triple.label;
      cs.decision.skew = gender_skew(triple.prompt, triple.male, triple.female, calibration,
                                     config.gate.similarity);
      cs.decision.verdict =
          verdict_override.value_or(classify(cs.decision.skew, config.gate.threshold));
      cs.weights = ToyDenoiser::base_only();
      std::optional<std::span<const double>> token;
      if (settings.special_token) token = std::span<const double>(*settings.special_token);
      const ConditioningContext context(triple.prompt, token);
      cs.samples = sample(make_predictor(base, schedule, cs.weights), schedule, context,
                          base.dims().k, config.samples_per_concept,
                          batch_seed(seed, triple.label), threads);
    }
    for (const auto& s : cs.samples) cs.attributes.push_back(oracle_classify(world, c, s));
    out.push_back(std::move(cs));
  }
  return out;
}

LabelTable to_label_table(const SyntheticWorld& world,
                          const std::vector<ConceptSamples>& samples) {
  std::vector<LabelRow> rows;
  for (std::size_t c = 0; c < samples.size(); ++c) {
    for (std::size_t i = 0; i < samples[c].attributes.size(); ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%05zu", i);
      rows.push_back({world.concepts.at(c).name, id,
                      world.attributes[samples[c].attributes[i]]});
    }
  }
  return LabelTable(std::move(rows), world.attributes);
}

std::vector<SampleRecord> to_sample_records(const SyntheticWorld& world,
                                            const std::vector<ConceptSamples>& samples) {
  std::vector<SampleRecord> rows;
  for (std::size_t c = 0; c < samples.size(); ++c)
    for (std::size_t i = 0; i < samples[c].attributes.size(); ++i)
      rows.push_back({world.concepts.at(c).name, i, world.attributes[samples[c].attributes[i]],
                      samples[c].decision.verdict});
  return rows;
}

E2EResult run_e2e(const ToyConfig& config, std::size_t threads, const ProgressFn& progress) {
  auto say = [&](std::string_view msg) {
    if (progress) progress(msg);
  };
  config.validate();
  const auto world = build_world(config);
  const auto calibration = build_world_calibration(world, config);

  say("pre-training the base model");
  auto pre = run_pretrain(config, world);
  say("fine-tuning the male and female experts");
  auto experts = run_train_experts(config, world, pre.model, threads);
  const ExpertRegistry registry(pre.model, experts.male, experts.female);

  say("sampling the base model");
  const auto before = sample_world(config, world, pre.model, nullptr, calibration, std::nullopt,
                                   threads);
  say("sampling through the gated experts");
  const auto after = sample_world(config, world, pre.model, &registry, calibration, std::nullopt,
                                  threads);

  E2EResult r;
  r.pretrain = pre.report;
  r.male = experts.male_report;
  r.female = experts.female_report;
  for (std::size_t c = 0; c < after.size(); ++c) {
    r.decisions.push_back(after[c].decision);
    const Verdict truth = world.concepts[c].p_first >= 0.5 ? Verdict::male : Verdict::female;
    if (after[c].decision.verdict == truth) ++r.gate_correct;
  }
  const std::string reported = world.attributes[0];
  r.before = fairness_score(to_label_table(world, before), reported, threads);
  r.after = fairness_score(to_label_table(world, after), reported, threads);
  return r;
}

namespace {

ordered_json training_json(const TrainingReport& r) {
  return {{"steps", r.steps}, {"initial_loss", r.initial_loss}, {"final_loss", r.final_loss}};
}

ordered_json fairness_json(const FairnessReport& r) {
  ordered_json per = ordered_json::object();
  for (const auto& occ : r.per_occupation) per[occ.occupation] = occ.deviation;
  return {{"attribute", r.attribute}, {"score", r.score}, {"std", r.std}, {"per_occupation", per}};
}

}  // namespace

std::string e2e_report_json(const ToyConfig& config, const E2EResult& result) {
  ordered_json j;
  j["seed"] = config.seed;
  j["training"] = {{"pretrain", training_json(result.pretrain)},
                   {"male", training_json(result.male)},
                   {"female", training_json(result.female)}};
  ordered_json decisions = ordered_json::array();
  for (const auto& d : result.decisions)
    decisions.push_back({{"concept", d.prompt_label},
                         {"skew", d.skew},
                         {"verdict", verdict_name(d.verdict)}});
  j["gate"] = {{"correct", result.gate_correct},
               {"total", result.decisions.size()},
               {"decisions", decisions}};
  j["before"] = fairness_json(result.before);
  j["after"] = fairness_json(result.after);
  return j.dump(2) + "\n";
}

}  // namespace fairdiff
