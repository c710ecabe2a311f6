#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vihd/config.hpp"
#include "vihd/error.hpp"
#include "vihd/metrics.hpp"
#include "vihd/pipeline.hpp"

namespace vihd::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Raw flag storage; a flag only overrides the config when it was given.
struct ConfigFlags {
  std::string config_file;
  int M = 0;
  std::string window;
  double ratio = 0, tau = 0, alpha = 0, top_p = 0, temperature = 0, nli_threshold = 0;
  int top_k = 0, threads = 0;
  std::string sampler, mask_strategy, layer_select, oracle, nli_url;
  std::uint64_t seed = 0;
  // One option list per subcommand; only the parsed subcommand has counts.
  std::vector<std::vector<CLI::Option*>> groups;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config with flat RunConfig keys")
        ->check(CLI::ExistingFile);
    groups.push_back({
        app->add_option("-M,--samples", M, "sampling runs per condition (default 10)"),
        app->add_option("--window", window, "window width: L/4, L/2, 3L/4, L or an integer"),
        app->add_option("--ratio", ratio, "masked fraction of visual tokens (default 0.10)"),
        app->add_option("--tau", tau, "cosine gate threshold (default 0.95)"),
        app->add_option("--alpha", alpha, "fusion factor (default 1.0)"),
        app->add_option("--sampler", sampler, "plain, nucleus or topk"),
        app->add_option("--top-p", top_p, "nucleus mass (default 0.9)"),
        app->add_option("--top-k", top_k, "top-k K (default 50)"),
        app->add_option("--temperature", temperature, "sampling temperature (default 1.0)"),
        app->add_option("--mask-strategy", mask_strategy, "high_attention, low_attention, random"),
        app->add_option("--layer-select", layer_select, "consecutive, isolated or all"),
        app->add_option("--oracle", oracle, "exact or nli"),
        app->add_option("--nli-url", nli_url, "base URL of the /entail service"),
        app->add_option("--nli-threshold", nli_threshold, "entailment probability threshold"),
        app->add_option("--seed", seed, "global random seed"),
        app->add_option("--threads", threads, "worker threads (0: all cores)"),
    });
  }

  bool given(std::size_t i) const {
    for (const auto& g : groups) {
      if (g[i]->count() > 0) return true;
    }
    return false;
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) cfg = read_config(config_file, cfg);
    json j = json::object();
    if (given(0)) j["M"] = M;
    if (given(1)) j["window"] = window;
    if (given(2)) j["ratio"] = ratio;
    if (given(3)) j["tau"] = tau;
    if (given(4)) j["alpha"] = alpha;
    if (given(5)) j["sampler"] = sampler;
    if (given(6)) j["top_p"] = top_p;
    if (given(7)) j["top_k"] = top_k;
    if (given(8)) j["temperature"] = temperature;
    if (given(9)) j["mask_strategy"] = mask_strategy;
    if (given(10)) j["layer_select"] = layer_select;
    if (given(11)) j["oracle"] = oracle;
    if (given(12)) j["nli_url"] = nli_url;
    if (given(13)) j["nli_threshold"] = nli_threshold;
    if (given(14)) j["seed"] = seed;
    if (given(15)) j["threads"] = threads;
    cfg = config_from_json(j, cfg);
    cfg.validate();
    return cfg;
  }
};

void emit(const json& j, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << j.dump(2) << "\n";
}

json selection_json(const vdp::LayerSelection& s) {
  json j = {{"strategy", vdp::to_string(s.strategy)}, {"layers", s.layers}};
  j["l_star"] = s.start ? json(*s.start) : json(nullptr);
  return j;
}

const GenerationRun& find_run(const SampleBundle& b, const std::string& id,
                              const std::vector<GenerationRun>& fallback) {
  for (const auto* runs : {&b.normal_runs, &b.intervened_runs}) {
    for (const auto& r : *runs) {
      if (r.run_id == id) return r;
    }
  }
  if (id.empty() && !fallback.empty()) return fallback.front();
  throw ValidationError("sample '" + b.sample_id + "' has no run '" + id + "'");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hallucination detection by visual intervention and calibrated semantic entropy",
               "vihd"};
  app.require_subcommand(1);

  ConfigFlags flags;

  std::string bundle_path, out_path;
  auto* probe = app.add_subcommand("probe", "per-layer visual dependency and selected window");
  probe->add_option("bundle", bundle_path, "bundle directory")->required();
  probe->add_option("-o,--out", out_path, "write JSON here instead of stdout");

  std::string scenario_path, ablation, curve_path;
  auto* simulate = app.add_subcommand("simulate", "run the toy decoder over a scenario file");
  simulate->add_option("scenario", scenario_path, "scenario JSON")->required();
  simulate->add_option("-o,--out", out_path, "dataset output directory");
  simulate->add_option("--ablation", ablation, "window, ratio, mask-strategy or layer-select");
  simulate->add_option("--curve", curve_path, "CSV output for --ablation (param,auc,aug)");

  std::string run_id;
  auto* plan = app.add_subcommand("plan", "replay the mask policy over a recorded run");
  plan->add_option("bundle", bundle_path, "bundle directory")->required();
  plan->add_option("--run", run_id, "run to replay (default: first normal run)");
  plan->add_option("-o,--out", out_path, "mask-plan JSON output (default stdout)");

  std::string baseline;
  auto* detect = app.add_subcommand("detect", "score samples; JSON Lines of detection records");
  detect->add_option("path", bundle_path, "bundle or dataset directory")->required();
  detect->add_option("-o,--out", out_path, "records output (default stdout)");
  detect->add_option("--baseline", baseline, "'se' for plain semantic entropy of normal runs")
      ->check(CLI::IsMember({"se"}));

  std::string records_path, labels_path, roc_path, subset;
  auto* eval = app.add_subcommand("eval", "AUC and AUG of detection records against labels");
  eval->add_option("records", records_path, "detection records (JSON Lines)")->required();
  eval->add_option("labels", labels_path, "labels CSV or JSON Lines")->required();
  eval->add_option("--roc", roc_path, "write ROC points as CSV");
  eval->add_option("--subset", subset, "only evaluate labels carrying this subset tag");
  eval->add_option("-o,--out", out_path, "report output (default stdout)");

  std::string plan_path;
  double tol = 1e-4;
  auto* verify = app.add_subcommand("verify", "check intervened runs against their mask plans");
  verify->add_option("bundle", bundle_path, "bundle directory")->required();
  verify->add_option("--plan", plan_path, "plan file (default: each run's mask_plan_ref)");
  verify->add_option("--run", run_id, "only verify this intervened run");
  verify->add_option("--tol", tol, "largest attention allowed on a masked token");

  for (auto* sub : {probe, simulate, plan, detect, eval, verify}) flags.attach(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitBadInput;
  }

  try {
    const RunConfig cfg = flags.resolve();

    if (*probe) {
      const auto bundle = read_bundle(bundle_path);
      const auto p = pipeline::probe(bundle, cfg);
      emit({{"sample_id", bundle.sample_id},
            {"profile", p.profile.scores},
            {"window", cfg.window.to_string()},
            {"selection", selection_json(p.selection)}},
           out_path, out);
      return kExitOk;
    }

    if (*simulate) {
      const auto specs = toy::read_scenario(scenario_path);
      if (!ablation.empty()) {
        const auto oracle = pipeline::make_oracle(cfg);
        const auto curve =
            pipeline::run_ablation(pipeline::ablation_from_string(ablation), specs, cfg, *oracle);
        if (curve_path.empty()) {
          out << "param,auc,aug\n";
          for (const auto& c : curve) out << c.param << "," << c.auc << "," << c.aug << "\n";
        } else {
          pipeline::write_curve_csv(curve, curve_path);
        }
        return kExitOk;
      }
      if (out_path.empty()) throw ParameterError("simulate: --out is required");
      const auto results = pipeline::simulate_dataset(specs, cfg);
      pipeline::write_dataset(results, specs, out_path);
      json summary = json::array();
      for (const auto& r : results) {
        summary.push_back({{"sample_id", r.bundle.sample_id},
                           {"selection", selection_json(r.probe.selection)}});
      }
      out << json{{"out", out_path}, {"samples", summary}}.dump(2) << "\n";
      return kExitOk;
    }

    if (*plan) {
      const auto bundle = read_bundle(bundle_path);
      const auto p = pipeline::probe(bundle, cfg);
      const auto& run = find_run(bundle, run_id, bundle.normal_runs);
      vid::MaskPolicy policy{cfg.mask_strategy, cfg.ratio, p.selection, cfg.seed};
      const auto mp = vid::build_mask_plan(run, bundle.meta, policy, bundle.sample_id);
      emit(vid::to_json(mp), out_path, out);
      return kExitOk;
    }

    if (*detect) {
      const auto bundles = pipeline::load_bundles(bundle_path);
      const auto oracle = pipeline::make_oracle(cfg);
      const auto method =
          baseline == "se" ? pipeline::Method::SemanticEntropy : pipeline::Method::Vihd;
      const auto records = pipeline::detect_all(bundles, *oracle, cfg, method);
      if (out_path.empty()) {
        for (const auto& r : records) out << cse::to_json(r).dump() << "\n";
      } else {
        metrics::write_records(records, out_path);
      }
      return kExitOk;
    }

    if (*eval) {
      const auto records = metrics::read_records(records_path);
      const auto labels = metrics::read_labels(labels_path);
      std::vector<metrics::RocPoint> roc;
      const auto report = metrics::evaluate(records, labels, subset, &roc);
      if (!roc_path.empty()) metrics::write_roc_csv(roc, roc_path);
      emit(metrics::to_json(report), out_path, out);
      return kExitOk;
    }

    if (*verify) {
      const auto bundle = read_bundle(bundle_path);
      std::optional<vid::MaskPlan> shared;
      if (!plan_path.empty()) shared = vid::read_mask_plan(plan_path);
      json reports = json::array();
      bool ok = true;
      for (const auto& r : bundle.intervened_runs) {
        if (!run_id.empty() && r.run_id != run_id) continue;
        const auto mp = shared ? *shared : vid::read_mask_plan(fs::path(bundle_path) / *r.mask_plan_ref);
        const auto report = vid::verify_mask_plan_compliance(r, bundle.meta, mp, tol);
        ok = ok && report.ok();
        reports.push_back(vid::to_json(report));
      }
      if (!run_id.empty() && reports.empty()) {
        throw ValidationError("no intervened run '" + run_id + "'");
      }
      out << json{{"ok", ok}, {"tol", tol}, {"runs", reports}}.dump(2) << "\n";
      return ok ? kExitOk : kExitFailure;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitBadInput;
}

}  // namespace vihd::cli
