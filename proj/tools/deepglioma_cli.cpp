// deepglioma: command-line driver for the synthetic desk-scale pipeline.
//
// Every subcommand reads one JSON config (defaults when omitted), applies
// --set overrides and works inside a run directory (--out).

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "deepglioma/eval/pipeline.hpp"

namespace ev = deepglioma::eval;
using nlohmann::json;

namespace {

/// "a.b.c=value": value is parsed as JSON when possible, else taken as a string.
void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  std::string pointer;
  for (char c : key) pointer += c == '.' ? '/' : c;
  const json::json_pointer ptr("/" + pointer);
  if (!cfg.contains(ptr)) throw std::invalid_argument("--set: unknown config key '" + key + "'");
  cfg[ptr] = value;
}

ev::ExperimentConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
  json cfg = ev::default_config();
  if (!path.empty()) cfg.merge_patch(ev::read_json(path));
  for (const auto& s : sets) apply_override(cfg, s);
  auto c = cfg.get<ev::ExperimentConfig>();
  c.validate();
  return c;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Molecular classification of synthetic SRH slides: data, training, inference, heatmaps, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir = "run";
  std::vector<std::string> sets;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("-o,--out", out_dir, "run directory for artifacts")->capture_default_str();
  app.add_option("-s,--set", sets, "override a config key, e.g. --set pretrain.epochs=5");
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  struct Command {
    const char* name;
    const char* help;
  };
  const std::vector<Command> stages{{"synth", "generate the synthetic cohort and patch cache"},
                                    {"embed-train", "train the gene co-occurrence embedding"},
                                    {"pretrain", "pretrain the patch encoder (patchcon or cross_entropy)"},
                                    {"train", "train the molecular classification head"},
                                    {"infer", "patient-level inference on the validation patients"},
                                    {"heatmap", "render subgroup heatmaps for validation slides"},
                                    {"ablate", "run the three ablation experiments"}};
  std::vector<CLI::App*> stage_cmds;
  for (const auto& s : stages) stage_cmds.push_back(app.add_subcommand(s.name, s.help));
  auto* report = app.add_subcommand("report", "summarize metrics; --check sets the exit code");
  bool check = false;
  report->add_flag("--check", check, "exit non-zero unless every acceptance check passes");
  auto* pipeline = app.add_subcommand("pipeline", "run synth, embed-train, pretrain, train, infer, heatmap and report");
  auto* show = app.add_subcommand("config", "print the resolved config");

  CLI11_PARSE(app, argc, argv);

  try {
    const ev::ExperimentConfig cfg = resolve_config(config_path, sets);
    const ev::RunLayout run{out_dir};
    const ev::Log log = quiet ? ev::Log{} : ev::Log{log_line};
    if (show->parsed()) {
      std::cout << json(cfg).dump(2) << "\n";
      return 0;
    }
    std::filesystem::create_directories(run.dir);
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    if (pipeline->parsed()) {
      const json r = ev::run_pipeline(cfg, run.dir, log);
      if (!quiet) std::fprintf(stderr, "pipeline finished in %.1f s, mAUC %s\n", elapsed(), r.at("metrics").at("mAUC").dump().c_str());
      return 0;
    }
    if (report->parsed()) {
      ev::CheckResult result;
      ev::stage_report(cfg, run, &result);
      for (const auto& l : result.lines) std::cout << l << "\n";
      return check && !result.passed ? 1 : 0;
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (!stage_cmds[i]->parsed()) continue;
      for (const auto& s : ev::pipeline_stages())
        if (s.name == stages[i].name) s.run(cfg, run, log);
      if (std::string(stages[i].name) == "ablate") ev::stage_ablate(cfg, run, log);
      if (!quiet) std::fprintf(stderr, "%s finished in %.1f s\n", stages[i].name, elapsed());
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
