#include "mfdr/io.hpp"

#include <cstdlib>
#include <set>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mfdr {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.precision(15);
  return out;
}

json config_to_json_obj(const SimConfig& c) {
  return json{{"schema_version", 1},
              {"n_loads", c.n_loads},
              {"m", c.m},
              {"grid_period_minutes", c.grid_period_minutes},
              {"i_max", c.i_max},
              {"switch_prob", c.switch_prob},
              {"beta", c.beta},
              {"qos_bounds", {c.bounds.lower, c.bounds.upper}},
              {"controller", {{"kp", c.gains.kp}, {"ki", c.gains.ki}}},
              {"reference_scale", c.reference_scale},
              {"seed", c.seed},
              {"opt_out", c.opt_out_enabled},
              {"zeta_clamp", c.zeta_clamp},
              {"n_workers", c.n_workers},
              {"tf_window", c.tf_window},
              {"hist_bin_width", c.hist_bin_width}};
}

}  // namespace

void write_reference_csv(const ReferenceFile& ref, const std::string& path) {
  auto out = open_out(path);
  out << "t_minutes,r0,r\n";
  for (std::size_t i = 0; i < ref.r0.size(); ++i) {
    out << ref.t_minutes[i] << ',' << ref.r0[i] << ',' << ref.r[i] << '\n';
  }
}

ReferenceFile read_reference_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open reference file: " + path);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) !=
      std::vector<std::string>{"t_minutes", "r0", "r"}) {
    throw std::runtime_error(path + ": expected header t_minutes,r0,r");
  }
  ReferenceFile ref;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 3 columns");
    }
    ref.t_minutes.push_back(std::stod(cells[0]));
    ref.r0.push_back(std::stod(cells[1]));
    ref.r.push_back(std::stod(cells[2]));
  }
  if (ref.t_minutes.size() >= 2) {
    ref.tg_minutes = ref.t_minutes[1] - ref.t_minutes[0];
  }
  return ref;
}

void write_trace_csv(const SimTrace& trace, double tg_minutes,
                     const std::string& path) {
  auto out = open_out(path);
  out << "t,t_minutes,y,y_tilde,r,e,zeta,zeta_clamped,optout_fraction,qos_mean\n";
  for (std::size_t t = 0; t < trace.y.size(); ++t) {
    out << t << ',' << t * tg_minutes << ',' << trace.y[t] << ','
        << trace.y_tilde[t] << ',' << trace.r[t] << ',' << trace.e[t] << ','
        << trace.zeta[t] << ',' << int(trace.zeta_clamped[t]) << ','
        << trace.optout_fraction[t] << ',' << trace.qos_mean[t] << '\n';
  }
}

std::vector<double> read_csv_column(const std::string& path,
                                    const std::string& column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  const auto header = split_csv_line(line);
  std::size_t col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == column) col = i;
  }
  if (col == header.size()) {
    throw std::runtime_error(path + ": no column named " + column);
  }
  std::vector<double> out;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() <= col) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": short row");
    }
    out.push_back(std::stod(cells[col]));
  }
  return out;
}

SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& err) {
    throw std::runtime_error(path + ": " + err.what());
  }
  if (j.value("schema_version", 0) != 1) {
    throw std::runtime_error(path + ": unsupported schema_version");
  }
  // Unknown keys are rejected: a typo that silently fell back to a
  // default would invalidate an entire experiment.
  static const std::set<std::string> known{
      "schema_version", "n_loads",         "m",
      "grid_period_minutes", "i_max",      "switch_prob",
      "beta",           "qos_bounds",      "controller",
      "reference_scale", "seed",           "opt_out",
      "zeta_clamp",     "n_workers",       "tf_window",
      "hist_bin_width"};
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) {
      throw std::runtime_error(path + ": unknown config key '" + item.key() +
                               "'");
    }
  }
  SimConfig c;
  c.n_loads = j.value("n_loads", c.n_loads);
  c.m = j.value("m", c.m);
  c.grid_period_minutes = j.value("grid_period_minutes", c.grid_period_minutes);
  c.i_max = j.value("i_max", c.i_max);
  c.switch_prob = j.value("switch_prob", c.switch_prob);
  c.beta = j.value("beta", c.beta);
  if (j.contains("qos_bounds")) {
    const auto& b = j.at("qos_bounds");
    if (!b.is_array() || b.size() != 2) {
      throw std::runtime_error(path + ": qos_bounds must be [lower, upper]");
    }
    c.bounds.lower = b[0].get<double>();
    c.bounds.upper = b[1].get<double>();
  }
  if (j.contains("controller")) {
    c.gains.kp = j.at("controller").value("kp", c.gains.kp);
    c.gains.ki = j.at("controller").value("ki", c.gains.ki);
  }
  c.reference_scale = j.value("reference_scale", c.reference_scale);
  c.seed = j.value("seed", c.seed);
  c.opt_out_enabled = j.value("opt_out", c.opt_out_enabled);
  c.zeta_clamp = j.value("zeta_clamp", c.zeta_clamp);
  c.n_workers = j.value("n_workers", c.n_workers);
  c.tf_window = j.value("tf_window", c.tf_window);
  c.hist_bin_width = j.value("hist_bin_width", c.hist_bin_width);
  if (const char* env = std::getenv("MEANFIELD_DR_SEED")) {
    c.seed = std::strtoull(env, nullptr, 10);
  }
  c.validate();
  return c;
}

std::string sim_config_to_json(const SimConfig& config) {
  return config_to_json_obj(config).dump(2);
}

void save_sim_config(const SimConfig& config, const std::string& path) {
  auto out = open_out(path);
  out << sim_config_to_json(config) << '\n';
}

void write_arma_json(const ARMACoeffs& coeffs, const std::string& path,
                     double ljung_box_stat, int ljung_box_dof,
                     double ljung_box_pvalue) {
  json j{{"a1", coeffs.a1},
         {"a2", coeffs.a2},
         {"b1", coeffs.b1},
         {"sigma_w2", coeffs.sigma_w2}};
  if (ljung_box_stat >= 0.0) {
    j["ljung_box"] = {{"statistic", ljung_box_stat},
                      {"dof", ljung_box_dof},
                      {"p_value", ljung_box_pvalue}};
  }
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

ARMACoeffs read_arma_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open coefficients file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& err) {
    throw std::runtime_error(path + ": " + err.what());
  }
  ARMACoeffs c;
  try {
    c.a1 = j.at("a1").get<double>();
    c.a2 = j.at("a2").get<double>();
    c.b1 = j.at("b1").get<double>();
    c.sigma_w2 = j.at("sigma_w2").get<double>();
  } catch (const json::exception& err) {
    throw std::runtime_error(path + ": " + err.what());
  }
  if (!c.stable()) throw std::runtime_error(path + ": unstable coefficients");
  return c;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for digest: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

void write_manifest(const std::string& path, const std::string& command,
                    const SimConfig* config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    double wall_seconds, std::uint64_t seed) {
  json j{{"tool_version", kToolVersion},
         {"command", command},
         {"seed", seed},
         {"wall_seconds", wall_seconds}};
  if (config != nullptr) j["config"] = json::parse(sim_config_to_json(*config));
  json in_digests = json::object();
  for (const auto& f : inputs) in_digests[f] = file_digest(f);
  j["input_digests"] = in_digests;
  j["outputs"] = outputs;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

}  // namespace mfdr
