#include "hypobridge/io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hypobridge {

namespace {

constexpr const char* kKernelMagic = "HBKC1";
constexpr const char* kPathsMagic = "HBPE1";

void write_doubles(std::ostream& os, const double* data, std::size_t count) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::istream& is, double* data, std::size_t count) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw std::runtime_error("artifact payload truncated");
}

Json mesh_to_json(const MeshSpec& m) {
  Json j;
  j["lo"] = std::vector<double>(m.lo.data(), m.lo.data() + m.lo.size());
  j["hi"] = std::vector<double>(m.hi.data(), m.hi.data() + m.hi.size());
  j["n"] = std::vector<int>(m.n.data(), m.n.data() + m.n.size());
  j["periodic"] = m.periodic;
  return j;
}

MeshSpec mesh_from_json(const Json& j) {
  MeshSpec m;
  auto lo = j.at("lo").get<std::vector<double>>();
  auto hi = j.at("hi").get<std::vector<double>>();
  auto n = j.at("n").get<std::vector<int>>();
  m.lo = Eigen::Map<const Vec>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  m.hi = Eigen::Map<const Vec>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  m.n = Eigen::Map<const Eigen::VectorXi>(n.data(), static_cast<Eigen::Index>(n.size()));
  m.periodic = j.at("periodic").get<bool>();
  return m;
}

}  // namespace

void save_kernel(const KernelEstimate& k, const std::string& path) {
  Json header;
  header["model"] = k.model;
  header["method"] = k.method == KernelMethod::GridPDE ? "grid" : "kde";
  header["side"] = k.side == KernelSide::Forward ? "forward" : "pinned";
  header["symmetric"] = k.symmetric;
  header["seed"] = k.seed;
  header["mass_tol"] = k.mass_tol;
  header["source"] = std::vector<double>(k.source.data(), k.source.data() + k.source.size());
  Json slices = Json::array();
  for (const auto& s : k.slices) {
    Json js;
    js["t"] = s.t;
    js["mesh"] = mesh_to_json(s.mesh);
    js["mass"] = s.mass;
    js["cloud_size"] = s.cloud_size;
    js["cloud_stored"] = s.cloud.rows() > 0;
    js["bandwidth_floored"] = s.bandwidth_floored;
    if (s.bandwidth.size())
      js["bandwidth"] = std::vector<double>(s.bandwidth.data(), s.bandwidth.data() + s.bandwidth.size());
    slices.push_back(js);
  }
  header["slices"] = slices;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write kernel cache: " + path);
  os << kKernelMagic << "\n" << header.dump() << "\n";
  for (const auto& s : k.slices) {
    write_doubles(os, s.values.data(), static_cast<std::size_t>(s.values.size()));
    if (s.cloud.rows() > 0) write_doubles(os, s.cloud.data(), static_cast<std::size_t>(s.cloud.size()));
  }
}

KernelEstimate load_kernel(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open kernel cache: " + path);
  std::string magic, header_line;
  std::getline(is, magic);
  if (magic != kKernelMagic) throw std::runtime_error("not a kernel cache artifact: " + path);
  std::getline(is, header_line);
  Json header = Json::parse(header_line);

  KernelEstimate k;
  k.model = header.at("model").get<std::string>();
  k.method = header.at("method") == "grid" ? KernelMethod::GridPDE : KernelMethod::MonteCarloKDE;
  k.side = header.at("side") == "forward" ? KernelSide::Forward : KernelSide::Pinned;
  k.symmetric = header.at("symmetric").get<bool>();
  k.seed = header.at("seed").get<std::uint64_t>();
  k.mass_tol = header.at("mass_tol").get<double>();
  auto src = header.at("source").get<std::vector<double>>();
  k.source = Eigen::Map<const Vec>(src.data(), static_cast<Eigen::Index>(src.size()));
  for (const auto& js : header.at("slices")) {
    TimeSlice s;
    s.t = js.at("t").get<double>();
    s.mesh = mesh_from_json(js.at("mesh"));
    s.mass = js.at("mass").get<double>();
    s.cloud_size = js.at("cloud_size").get<int>();
    s.bandwidth_floored = js.at("bandwidth_floored").get<bool>();
    if (js.contains("bandwidth")) {
      auto bw = js.at("bandwidth").get<std::vector<double>>();
      s.bandwidth = Eigen::Map<const Vec>(bw.data(), static_cast<Eigen::Index>(bw.size()));
    }
    s.values.resize(static_cast<Eigen::Index>(s.mesh.node_count()));
    read_doubles(is, s.values.data(), s.mesh.node_count());
    if (js.at("cloud_stored").get<bool>()) {
      s.cloud.resize(s.cloud_size, s.mesh.dim());
      read_doubles(is, s.cloud.data(), static_cast<std::size_t>(s.cloud.size()));
    }
    k.slices.push_back(std::move(s));
  }
  return k;
}

void save_paths_csv(const std::vector<SamplePath>& paths, int dim, const std::string& path) {
  std::ofstream os(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!os) throw std::runtime_error("cannot write ensemble CSV: " + path);
  os << "path_id,step,t";
  for (int d = 0; d < dim; ++d) os << ",x" << d;
  os << ",clamped\n";
  os.precision(17);
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const SamplePath& sp = paths[p];
    for (int s = 0; s <= sp.n_steps(); ++s) {
      os << p << "," << s << "," << s * sp.dt;
      for (int d = 0; d < dim; ++d) os << "," << sp.states(s, d);
      int clamped = s > 0 && static_cast<std::size_t>(s - 1) < sp.drift_clamped.size()
                        ? sp.drift_clamped[s - 1]
                        : 0;
      os << "," << clamped << "\n";
    }
  }
}

void save_paths_binary(const std::vector<SamplePath>& paths, int dim, const std::string& path) {
  Json header;
  header["dim"] = dim;
  header["n_paths"] = paths.size();
  Json meta = Json::array();
  for (const auto& p : paths) {
    Json jp;
    jp["steps"] = p.n_steps();
    jp["dt"] = p.dt;
    jp["seed"] = p.seed;
    jp["stream"] = p.stream;
    jp["failed"] = p.failed;
    meta.push_back(jp);
  }
  header["paths"] = meta;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write ensemble artifact: " + path);
  os << kPathsMagic << "\n" << header.dump() << "\n";
  for (const auto& p : paths)
    write_doubles(os, p.states.data(), static_cast<std::size_t>(p.states.size()));
}

std::vector<SamplePath> load_paths_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open ensemble artifact: " + path);
  std::string magic, header_line;
  std::getline(is, magic);
  if (magic != kPathsMagic) throw std::runtime_error("not an ensemble artifact: " + path);
  std::getline(is, header_line);
  Json header = Json::parse(header_line);
  int dim = header.at("dim").get<int>();
  std::vector<SamplePath> paths;
  for (const auto& jp : header.at("paths")) {
    SamplePath p;
    int steps = jp.at("steps").get<int>();
    p.dt = jp.at("dt").get<double>();
    p.horizon = steps * p.dt;
    p.seed = jp.at("seed").get<std::uint64_t>();
    p.stream = jp.at("stream").get<std::uint64_t>();
    p.failed = jp.at("failed").get<bool>();
    p.states.resize(steps + 1, dim);
    read_doubles(is, p.states.data(), static_cast<std::size_t>(p.states.size()));
    paths.push_back(std::move(p));
  }
  return paths;
}

Json report_to_json(const VerificationReport& rep) {
  Json j;
  j["statistic"] = rep.statistic;
  j["estimate"] = rep.estimate;
  j["se"] = rep.se;
  j["ci"] = {rep.ci_lo, rep.ci_hi};
  j["constants"] = rep.constants;
  j["thresholds"] = rep.thresholds;
  Json sweep = Json::array();
  for (const auto& s : rep.sweep) {
    Json js;
    js["parameter"] = s.parameter;
    js["value"] = s.value;
    js["se"] = s.se;
    sweep.push_back(js);
  }
  j["sweep"] = sweep;
  j["pass"] = rep.pass;
  j["excluded_fraction"] = rep.excluded_fraction;
  j["flags"] = rep.flags;
  return j;
}

VerificationReport report_from_json(const Json& j) {
  VerificationReport rep;
  rep.statistic = j.at("statistic").get<std::string>();
  rep.estimate = j.at("estimate").get<double>();
  rep.se = j.at("se").get<double>();
  rep.ci_lo = j.at("ci")[0].get<double>();
  rep.ci_hi = j.at("ci")[1].get<double>();
  rep.constants = j.at("constants").get<std::map<std::string, double>>();
  rep.thresholds = j.at("thresholds").get<std::map<std::string, double>>();
  for (const auto& js : j.at("sweep"))
    rep.sweep.push_back({js.at("parameter").get<double>(), js.at("value").get<double>(),
                         js.at("se").get<double>()});
  rep.pass = j.at("pass").get<bool>();
  rep.excluded_fraction = j.at("excluded_fraction").get<double>();
  rep.flags = j.at("flags").get<std::vector<std::string>>();
  return rep;
}

void save_reports_json(const std::vector<VerificationReport>& reports, const Json& meta,
                       const std::string& path) {
  Json j;
  j["schema_version"] = 1;
  j["meta"] = meta;
  Json arr = Json::array();
  for (const auto& r : reports) arr.push_back(report_to_json(r));
  j["reports"] = arr;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write report: " + path);
  os << j.dump(2) << "\n";
}

void save_reports_csv(const std::vector<VerificationReport>& reports, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write report CSV: " + path);
  os.precision(17);
  os << "statistic,field,parameter,value,se\n";
  for (const auto& r : reports) {
    os << r.statistic << ",estimate,," << r.estimate << "," << r.se << "\n";
    os << r.statistic << ",pass,," << (r.pass ? 1 : 0) << ",0\n";
    for (const auto& [k, v] : r.constants) os << r.statistic << "," << k << ",," << v << ",0\n";
    for (const auto& s : r.sweep)
      os << r.statistic << ",sweep," << s.parameter << "," << s.value << "," << s.se << "\n";
  }
}

Json manifest_to_json(const ExperimentManifest& m) {
  Json j;
  j["schema_version"] = m.schema_version;
  j["experiment"] = m.experiment;
  j["model"] = m.model;
  j["tool_version"] = m.tool_version;
  j["config"] = m.config;
  j["master_seed"] = m.master_seed;
  Json hashes = Json::array();
  for (const auto& [file, hash] : m.input_hashes) {
    Json h;
    h["file"] = file;
    h["hash"] = hash;
    hashes.push_back(h);
  }
  j["input_hashes"] = hashes;
  j["outputs"] = m.outputs;
  j["wall_clock_sec"] = m.wall_clock_sec;
  j["path_failure_fraction"] = m.path_failure_fraction;
  return j;
}

void save_manifest(const ExperimentManifest& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest: " + path);
  os << manifest_to_json(m).dump(2) << "\n";
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot hash missing file: " + path);
  std::uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!is) break;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

std::string tool_version() { return "0.1.0"; }

}  // namespace hypobridge
