// Experiment runner: builds kernels, simulates diffusions and bridges,
// computes intrinsic distances, and runs the verification suites. Every run
// writes a manifest plus its artifacts under an output directory.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hypobridge/bridge.hpp"
#include "hypobridge/ccdist.hpp"
#include "hypobridge/heatkernel.hpp"
#include "hypobridge/io.hpp"
#include "hypobridge/parallel.hpp"
#include "hypobridge/suites.hpp"

namespace fs = std::filesystem;
using namespace hypobridge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitVerifyFail = 2;
constexpr int kExitUsage = 64;

struct RunContext {
  Json config = Json::object();
  std::uint64_t seed = 42;
  int jobs = 1;
  std::string out_root = "out";
  std::string experiment = "run";
  fs::path out_dir;
  ExperimentManifest manifest;
  std::chrono::steady_clock::time_point started;

  void prepare(const std::string& model) {
    set_worker_count(jobs);
    std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::gmtime(&now));
    out_dir = fs::path(out_root) / experiment / (std::string(stamp) + "-" + std::to_string(seed));
    fs::create_directories(out_dir);
    fs::create_directories(cache_dir());
    manifest.experiment = experiment;
    manifest.model = model;
    manifest.tool_version = tool_version();
    manifest.config = config;
    manifest.config["seed"] = seed;
    manifest.config["jobs"] = jobs;
    manifest.master_seed = seed;
    started = std::chrono::steady_clock::now();
  }

  fs::path cache_dir() const {
    if (const char* env = std::getenv("HYPOBRIDGE_CACHE_DIR")) return fs::path(env);
    return out_dir / "cache";
  }

  std::string emit(const std::string& name) {
    std::string p = (out_dir / name).string();
    manifest.outputs.push_back(p);
    return p;
  }

  void finish() {
    manifest.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::string p = (out_dir / "manifest.json").string();
    save_manifest(manifest, p);
    std::cout << "manifest: " << p << "\n";
  }
};

Vec parse_point(const std::string& csv) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
  return Eigen::Map<const Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::vector<double> parse_times(const std::string& csv) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
  return vals;
}

void apply_override(Json& config, const std::string& kv) {
  auto pos = kv.find('=');
  if (pos == std::string::npos) throw CLI::ValidationError("--set expects key=value");
  std::string key = kv.substr(0, pos), value = kv.substr(pos + 1);
  try {
    config[key] = Json::parse(value);  // numbers, booleans, quoted strings
  } catch (const Json::exception&) {
    config[key] = value;  // bare string
  }
}

Vec config_drift(const Json& config) {
  if (config.contains("drift")) {
    auto v = config.at("drift").get<std::vector<double>>();
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  return Vec();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hypoelliptic bridge simulation and verification"};
  app.require_subcommand(1);

  RunContext ctx;
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--set", overrides, "config override key=value (repeatable)");
  app.add_option("--seed", ctx.seed, "master seed");
  app.add_option("--jobs", ctx.jobs, "worker thread count");
  app.add_option("--out", ctx.out_root, "output root directory");

  std::string model = "torus-elliptic";
  std::string from_csv = "0.3,0.2", to_csv = "0.7,0.6", times_csv = "0.1,0.2";
  std::string kernel_cache, suite = "baseline";
  int mesh_nodes = 96, n_paths = 1000, grid_points = 16;
  int cc_segments = 32, cc_restarts = 8;
  double dt = 1e-3, horizon = 1.0, cutoff = 0.05, bandwidth_scale = 1.0;

  CLI::App* bracket = app.add_subcommand("bracket-check", "Hormander levels over a point grid");
  bracket->add_option("--model", model);
  bracket->add_option("--grid", grid_points, "points per axis");

  CLI::App* heat = app.add_subcommand("heat-solve", "grid heat kernel from a source point");
  heat->add_option("--model", model);
  heat->add_option("--source", from_csv);
  heat->add_option("--times", times_csv);
  heat->add_option("--mesh", mesh_nodes);
  heat->add_option("--kernel-cache", kernel_cache, "reuse/store the kernel artifact");

  CLI::App* kde = app.add_subcommand("kde", "Monte Carlo kernel density estimate");
  kde->add_option("--model", model);
  kde->add_option("--source", from_csv);
  kde->add_option("--times", times_csv);
  kde->add_option("--paths", n_paths);
  kde->add_option("--bandwidth-scale", bandwidth_scale);
  kde->add_option("--kernel-cache", kernel_cache);

  CLI::App* sim = app.add_subcommand("simulate", "unconditioned diffusion ensemble");
  sim->add_option("--model", model);
  sim->add_option("--from", from_csv);
  sim->add_option("--horizon", horizon);
  sim->add_option("--dt", dt);
  sim->add_option("--paths", n_paths);

  CLI::App* bridge_cmd = app.add_subcommand("bridge", "conditioned bridge ensemble");
  bridge_cmd->add_option("--model", model);
  bridge_cmd->add_option("--from", from_csv);
  bridge_cmd->add_option("--to", to_csv);
  bridge_cmd->add_option("--dt", dt);
  bridge_cmd->add_option("--cutoff", cutoff);
  bridge_cmd->add_option("--paths", n_paths);
  bridge_cmd->add_option("--kernel-cache", kernel_cache);

  CLI::App* ccdist_cmd = app.add_subcommand("ccdist", "intrinsic distance upper bound");
  ccdist_cmd->add_option("--model", model);
  ccdist_cmd->add_option("--from", from_csv);
  ccdist_cmd->add_option("--to", to_csv);
  ccdist_cmd->add_option("--segments", cc_segments);
  ccdist_cmd->add_option("--restarts", cc_restarts);

  CLI::App* verify_cmd = app.add_subcommand("verify", "run a verification suite");
  verify_cmd->add_option("--suite", suite)->check(CLI::IsMember(known_suites()));

  std::vector<std::string> report_inputs;
  CLI::App* report_cmd = app.add_subcommand("report", "consolidate report artifacts");
  report_cmd->add_option("artifacts", report_inputs, "report JSON files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (config_path.size()) {
      std::ifstream is(config_path);
      if (!is) throw std::runtime_error("cannot open config: " + config_path);
      ctx.config = Json::parse(is);
      if (ctx.config.contains("seed")) ctx.seed = ctx.config["seed"].get<std::uint64_t>();
      if (ctx.config.contains("jobs")) ctx.jobs = ctx.config["jobs"].get<int>();
      ctx.manifest.input_hashes.push_back({config_path, file_hash_hex(config_path)});
    }
    for (const auto& kv : overrides) apply_override(ctx.config, kv);
    if (!app.get_subcommand("report")->parsed() && !is_known_model(model) &&
        (bracket->parsed() || heat->parsed() || kde->parsed() || sim->parsed() ||
         bridge_cmd->parsed() || ccdist_cmd->parsed())) {
      std::cerr << "unknown model: " << model << "\n";
      return kExitUsage;
    }

    if (bracket->parsed()) {
      ctx.experiment = "bracket-check";
      ctx.prepare(model);
      VectorFieldSystem sys = make_system(model, config_drift(ctx.config));
      std::ofstream os(ctx.emit("levels.csv"), std::ios::binary);
      os << "point,level,spanned\n";
      std::vector<Vec> pts;
      if (sys.space.kind == ModelKind::Torus2) {
        for (int i = 0; i < grid_points; ++i)
          for (int j = 0; j < grid_points; ++j)
            pts.push_back(Vec2(static_cast<double>(i) / grid_points,
                               static_cast<double>(j) / grid_points));
      } else {
        pts = sample_points(sys.space, grid_points * grid_points, ctx.seed);
      }
      for (const auto& p : pts) {
        HormanderLevel l = hormander_level(sys, p, 4);
        os << "\"";
        for (int d = 0; d < p.size(); ++d) os << (d ? ";" : "") << p[d];
        os << "\"," << l.level << "," << (l.spanned ? 1 : 0) << "\n";
      }
      ctx.finish();
      return kExitOk;
    }

    if (heat->parsed() || kde->parsed()) {
      ctx.experiment = heat->parsed() ? "heat-solve" : "kde";
      ctx.prepare(model);
      VectorFieldSystem sys = make_system(model, config_drift(ctx.config));
      KernelEstimate k;
      bool from_cache = kernel_cache.size() && fs::exists(kernel_cache);
      if (from_cache) {
        k = load_kernel(kernel_cache);
        ctx.manifest.input_hashes.push_back({kernel_cache, file_hash_hex(kernel_cache)});
      } else if (heat->parsed()) {
        GridOptions gopts;
        gopts.nodes_per_axis = mesh_nodes;
        k = solve_heat_grid(sys, parse_point(from_csv), parse_times(times_csv), gopts);
      } else {
        KdeOptions kopts;
        kopts.bandwidth_scale = bandwidth_scale;
        k = mc_kde_kernel(sys, parse_point(from_csv), parse_times(times_csv), n_paths, kopts,
                          ctx.seed);
      }
      std::string artifact = kernel_cache.size() && !from_cache
                                 ? kernel_cache
                                 : (ctx.cache_dir() / "kernel.hbkc").string();
      if (!from_cache) save_kernel(k, artifact);
      ctx.manifest.outputs.push_back(artifact);
      std::ofstream os(ctx.emit("kernel_summary.csv"), std::ios::binary);
      os.precision(17);
      os << "t,mass,max_value\n";
      for (const auto& s : k.slices)
        os << s.t << "," << s.mass << "," << s.values.maxCoeff() << "\n";
      ctx.finish();
      return kExitOk;
    }

    if (sim->parsed()) {
      ctx.experiment = "simulate";
      ctx.prepare(model);
      VectorFieldSystem sys = make_system(model, config_drift(ctx.config));
      auto paths = simulate_diffusion_ensemble(sys, parse_point(from_csv), horizon, dt, n_paths,
                                               ctx.seed);
      save_paths_csv(paths, sys.dim(), ctx.emit("ensemble.csv"));
      ctx.finish();
      return kExitOk;
    }

    if (bridge_cmd->parsed()) {
      ctx.experiment = "bridge";
      ctx.prepare(model);
      VectorFieldSystem sys = make_system(model, config_drift(ctx.config));
      KernelEstimate pinned;
      if (kernel_cache.size() && fs::exists(kernel_cache)) {
        pinned = load_kernel(kernel_cache);
        ctx.manifest.input_hashes.push_back({kernel_cache, file_hash_hex(kernel_cache)});
      } else {
        KdeOptions kopts;
        kopts.store_cloud = false;
        pinned = pinning_kernel(sys, parse_point(to_csv), dense_time_grid(), GridOptions{}, kopts,
                                40000, ctx.seed + 1);
        if (kernel_cache.size()) {
          save_kernel(pinned, kernel_cache);
          ctx.manifest.outputs.push_back(kernel_cache);
        }
      }
      BridgeConfig cfg;
      cfg.x0 = parse_point(from_csv);
      cfg.z0 = parse_point(to_csv);
      cfg.dt = dt;
      cfg.cutoff = cutoff;
      cfg.seed = ctx.seed;
      BridgeEnsemble ens = simulate_bridge_ensemble(cfg, sys, pinned, n_paths);
      ctx.manifest.path_failure_fraction = ens.failure_fraction;
      save_paths_csv(ens.paths, sys.dim(), ctx.emit("bridge_ensemble.csv"));
      std::cout << "failure_fraction: " << ens.failure_fraction << "\n";
      ctx.finish();
      return kExitOk;
    }

    if (ccdist_cmd->parsed()) {
      ctx.experiment = "ccdist";
      ctx.prepare(model);
      VectorFieldSystem sys = make_system(model, config_drift(ctx.config));
      CcOptions opts;
      opts.n_segments = cc_segments;
      opts.restarts = cc_restarts;
      Vec a = parse_point(from_csv), b = parse_point(to_csv);
      DistanceResult d = cc_distance(sys, a, b, opts, ctx.seed);
      std::ofstream os(ctx.emit("ccdist.csv"), std::ios::binary);
      os.precision(17);
      os << "x,y,d_upper,endpoint_residual,n_segments,restarts\n";
      os << "\"" << from_csv << "\",\"" << to_csv << "\"," << d.upper_bound << ","
         << d.endpoint_residual << "," << cc_segments << "," << cc_restarts << "\n";
      std::cout << "d_upper: " << d.upper_bound << " residual: " << d.endpoint_residual << "\n";
      ctx.finish();
      return d.unreachable ? kExitVerifyFail : kExitOk;
    }

    if (verify_cmd->parsed()) {
      ctx.experiment = "verify-" + suite;
      ctx.prepare(suite);
      SuiteOptions sopts;
      sopts.seed = ctx.seed;
      SuiteResult res = run_suite(suite, sopts);
      Json meta;
      meta["suite"] = suite;
      meta["seed"] = ctx.seed;
      meta["tool_version"] = tool_version();
      save_reports_json(res.reports, meta, ctx.emit("reports.json"));
      save_reports_csv(res.reports, ctx.emit("reports.csv"));
      for (const auto& r : res.reports)
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.statistic << "\n";
      ctx.finish();
      return res.pass() ? kExitOk : kExitVerifyFail;
    }

    if (report_cmd->parsed()) {
      ctx.experiment = "report";
      ctx.prepare("");
      Json merged;
      merged["schema_version"] = 1;
      Json groups = Json::object();
      std::vector<VerificationReport> all;
      for (const auto& in : report_inputs) {
        std::ifstream is(in);
        if (!is) throw std::runtime_error("cannot open artifact: " + in);
        Json j = Json::parse(is);
        if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
          throw std::runtime_error("schema mismatch in artifact: " + in);
        ctx.manifest.input_hashes.push_back({in, file_hash_hex(in)});
        std::string seed_key = j["meta"].contains("seed")
                                   ? std::to_string(j["meta"]["seed"].get<std::uint64_t>())
                                   : "unknown";
        if (!groups.contains(seed_key)) groups[seed_key] = Json::array();
        for (const auto& jr : j["reports"]) {
          groups[seed_key].push_back(jr);
          all.push_back(report_from_json(jr));
        }
      }
      merged["by_seed"] = groups;
      std::ofstream os(ctx.emit("summary.json"), std::ios::binary);
      os << merged.dump(2) << "\n";
      save_reports_csv(all, ctx.emit("summary.csv"));
      ctx.finish();
      return kExitOk;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}
