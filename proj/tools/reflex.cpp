// reflex: command-line driver for the steering pipeline.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reflex/error.hpp"
#include "reflex/pipeline.hpp"

namespace {

using reflex::pipeline::json;

struct Common {
  std::string config;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

int exit_code(const reflex::Error& e) {
  switch (e.kind()) {
    case reflex::ErrorKind::config: return 1;
    case reflex::ErrorKind::dependency: return 2;
    default: return 3;
  }
}

void print_line(json line, double seconds) {
  line["seconds"] = std::round(seconds * 1000.0) / 1000.0;
  std::cout << line.dump() << std::endl;
}

int run(const std::string& stage, const Common& c, std::vector<std::string> extra) {
  auto sets = c.sets;
  if (c.seed) sets.push_back("seed=" + std::to_string(*c.seed));
  sets.insert(sets.end(), extra.begin(), extra.end());
  const reflex::pipeline::Context ctx{reflex::pipeline::load_config(c.config, sets), c.out};
  const auto stages =
      stage == "run-all" ? reflex::pipeline::stage_names() : std::vector<std::string>{stage};
  for (const auto& s : stages) {
    const auto t0 = std::chrono::steady_clock::now();
    auto line = reflex::pipeline::run_stage(s, ctx);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    print_line(std::move(line), dt.count());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reflex: contrastive activation steering on a toy fact-checking model"};
  app.require_subcommand(1);
  Common common;
  app.add_option("-c,--config", common.config, "JSON run config");
  app.add_option("-o,--out", common.out, "output directory")->capture_default_str();
  app.add_option("--seed", common.seed, "run seed");
  app.add_option("--set", common.sets, "config override key.path=value (repeatable)");

  std::vector<std::string> extra;
  std::string stage;
  std::optional<std::string> corpus_path, layers, multipliers, select_on, mode, policy, pooling;
  std::optional<std::size_t> drift_layer;

  const auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    sub->callback([&stage, name] { stage = name; });
    return sub;
  };
  add("gen-corpus", "generate or load the claim corpus")
      ->add_option("--corpus", corpus_path, "load an NDJSON corpus instead of generating");
  add("train", "train the backbone and the fine-tuned model")
      ->add_option("--drift-layer", drift_layer, "layer that receives the planted shift");
  add("infer", "greedy-decode eval and test with both models");
  auto* dump = add("dump-acts", "capture hidden states for pairing");
  dump->add_option("--mode", mode, "vertical | horizontal | self");
  add("pair", "assign transfer quadrants");
  auto* pr = add("probe", "train per-layer probes");
  pr->add_option("--policy", policy, "style_substance | truth | base | sft");
  pr->add_option("--pooling", pooling, "last_prompt_token | mean_answer_tokens");
  auto* sw = add("sweep", "layer by multiplier sweep");
  sw->add_option("--layers", layers, "JSON list of layers");
  sw->add_option("--multipliers", multipliers, "JSON list of multipliers");
  sw->add_option("--select-on", select_on, "gap | accuracy");
  add("steer", "steered vs unsteered decoding");
  add("refine", "flag and suppress negatively aligned spans");
  add("eval", "metrics from stored predictions");
  add("report", "aggregate report");
  add("run-all", "every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (corpus_path) extra.push_back("corpus.path=" + json(*corpus_path).dump());
  if (drift_layer) extra.push_back("drift.layer=" + std::to_string(*drift_layer));
  if (mode) extra.push_back("pairing.mode=" + json(*mode).dump());
  if (policy) extra.push_back("pairing.policy=" + json(*policy).dump());
  if (pooling) extra.push_back("pairing.pooling=" + json(*pooling).dump());
  if (layers) extra.push_back("sweep.layers=" + *layers);
  if (multipliers) extra.push_back("sweep.multipliers=" + *multipliers);
  if (select_on) extra.push_back("sweep.select_on=" + json(*select_on).dump());

  try {
    return run(stage, common, std::move(extra));
  } catch (const reflex::DependencyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cout << json{{"stage", stage}, {"status", "error"}, {"kind", "dependency"},
                      {"producer", e.producer()}, {"message", e.what()}}
                     .dump()
              << std::endl;
    return 2;
  } catch (const reflex::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cout << json{{"stage", stage}, {"status", "error"}, {"kind", reflex::to_string(e.kind())},
                      {"message", e.what()}}
                     .dump()
              << std::endl;
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
