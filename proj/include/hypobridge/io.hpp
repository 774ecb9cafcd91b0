#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "hypobridge/bridge.hpp"
#include "hypobridge/heatkernel.hpp"
#include "hypobridge/verify.hpp"

namespace hypobridge {

using Json = nlohmann::ordered_json;

/// Kernel cache artifact: magic line, one JSON header line (model, method,
/// times, mesh/bandwidth spec, seed, mass record), then a raw little-endian
/// double payload with the slice values (and clouds when stored).
void save_kernel(const KernelEstimate& k, const std::string& path);
KernelEstimate load_kernel(const std::string& path);

/// Ensemble CSV: header row, columns path_id, step, t, coordinates..., clamped.
void save_paths_csv(const std::vector<SamplePath>& paths, int dim, const std::string& path);

/// Compact binary ensemble (JSON header line + double payload).
void save_paths_binary(const std::vector<SamplePath>& paths, int dim, const std::string& path);
std::vector<SamplePath> load_paths_binary(const std::string& path);

Json report_to_json(const VerificationReport& rep);
VerificationReport report_from_json(const Json& j);
void save_reports_json(const std::vector<VerificationReport>& reports, const Json& meta,
                       const std::string& path);

/// Flat plotting CSV: statistic, field, parameter, value, se.
void save_reports_csv(const std::vector<VerificationReport>& reports, const std::string& path);

struct ExperimentManifest {
  int schema_version = 1;
  std::string experiment;
  std::string model;
  std::string tool_version;
  Json config;
  std::uint64_t master_seed = 0;
  std::vector<std::pair<std::string, std::string>> input_hashes;  // (file, fnv1a-64)
  std::vector<std::string> outputs;
  double wall_clock_sec = 0.0;
  double path_failure_fraction = 0.0;
};

Json manifest_to_json(const ExperimentManifest& m);
void save_manifest(const ExperimentManifest& m, const std::string& path);

/// FNV-1a 64-bit content hash, hex-encoded (manifest bookkeeping, not crypto).
std::string file_hash_hex(const std::string& path);

std::string tool_version();

}  // namespace hypobridge
