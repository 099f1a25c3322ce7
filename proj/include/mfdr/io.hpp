#pragma once

#include <string>
#include <vector>

#include "mfdr/grid_sim.hpp"
#include "mfdr/spectral.hpp"

namespace mfdr {

inline constexpr const char* kToolVersion = "mfdr 0.1.0";

struct ReferenceFile {
  double tg_minutes = 5.0;
  std::vector<double> t_minutes;
  std::vector<double> r0;  // raw regulation signal
  std::vector<double> r;   // low-passed (and possibly scaled) reference
};

void write_reference_csv(const ReferenceFile& ref, const std::string& path);
ReferenceFile read_reference_csv(const std::string& path);

void write_trace_csv(const SimTrace& trace, double tg_minutes,
                     const std::string& path);

// Single named column from a CSV written by this tool.
std::vector<double> read_csv_column(const std::string& path,
                                    const std::string& column);

// JSON config; unknown schema versions are rejected. The environment
// variable MEANFIELD_DR_SEED overrides the file seed, and CLI flags
// override both.
SimConfig load_sim_config(const std::string& path);
void save_sim_config(const SimConfig& config, const std::string& path);
std::string sim_config_to_json(const SimConfig& config);

void write_arma_json(const ARMACoeffs& coeffs, const std::string& path,
                     double ljung_box_stat = -1.0, int ljung_box_dof = 0,
                     double ljung_box_pvalue = -1.0);
ARMACoeffs read_arma_json(const std::string& path);

// FNV-1a content digest, hex-encoded.
std::string file_digest(const std::string& path);

void write_manifest(const std::string& path, const std::string& command,
                    const SimConfig* config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    double wall_seconds, std::uint64_t seed);

}  // namespace mfdr
