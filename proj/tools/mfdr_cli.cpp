// Experiment driver: generates regulation references, runs the
// closed-loop population, and produces QoS predictions and ARMA fits as
// data files (CSV/JSON); plotting stays out of the core.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfdr/grid_sim.hpp"
#include "mfdr/io.hpp"
#include "mfdr/meanfield.hpp"
#include "mfdr/qos.hpp"
#include "mfdr/spectral.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitNumericalError = 3;
constexpr double kDefaultCutoff = 0.005;  // cycles per grid sample

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Wilson-Hilferty approximation to the chi-square upper tail.
double chi2_pvalue(double stat, int dof) {
  if (dof <= 0 || stat <= 0.0) return 1.0;
  const double c = 2.0 / (9.0 * dof);
  const double z = (std::cbrt(stat / dof) - (1.0 - c)) / std::sqrt(c);
  return 1.0 - normal_cdf(z);
}

struct LjungBox {
  double stat;
  int dof;
  double p_value;
};

LjungBox ljung_box(const std::vector<double>& residuals, int lags, int fitted) {
  const long n = static_cast<long>(residuals.size());
  double mean = 0.0;
  for (double v : residuals) mean += v;
  mean /= double(n);
  double var = 0.0;
  for (double v : residuals) var += (v - mean) * (v - mean);
  double stat = 0.0;
  for (int k = 1; k <= lags; ++k) {
    double acc = 0.0;
    for (long t = k; t < n; ++t) {
      acc += (residuals[t] - mean) * (residuals[t - k] - mean);
    }
    const double rho = acc / var;
    stat += rho * rho / double(n - k);
  }
  stat *= double(n) * (double(n) + 2.0);
  const int dof = std::max(1, lags - fitted);
  return {stat, dof, chi2_pvalue(stat, dof)};
}

struct CommonOptions {
  std::string config_path;
  std::string reference_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> scale;
  std::optional<int> n_loads;
  std::optional<double> hours;
  bool no_opt_out = false;
};

mfdr::SimConfig resolve_config(const CommonOptions& opt) {
  mfdr::SimConfig config;
  if (!opt.config_path.empty()) config = mfdr::load_sim_config(opt.config_path);
  // Precedence: CLI flags > MEANFIELD_DR_SEED > config file.
  if (const char* env = std::getenv("MEANFIELD_DR_SEED")) {
    config.seed = std::strtoull(env, nullptr, 10);
  }
  if (opt.seed) config.seed = *opt.seed;
  if (opt.scale) config.reference_scale = *opt.scale;
  if (opt.n_loads) config.n_loads = *opt.n_loads;
  if (opt.no_opt_out) config.opt_out_enabled = false;
  config.validate();
  return config;
}

std::vector<double> clip_to_hours(std::vector<double> series, double hours,
                                  double tg_minutes) {
  if (hours <= 0.0) return series;
  const auto want = static_cast<std::size_t>(std::llround(hours * 60.0 / tg_minutes));
  if (want > series.size()) {
    throw std::runtime_error("reference shorter than requested horizon");
  }
  series.resize(want);
  return series;
}

int cmd_gen_ref(const CommonOptions& opt, double hours, double tg_minutes,
                double cutoff, const std::string& coeffs_path) {
  const auto start = Clock::now();
  mfdr::ARMACoeffs coeffs = coeffs_path.empty() ? mfdr::bpa_arma_coeffs()
                                                : mfdr::read_arma_json(coeffs_path);
  const long n = std::llround(hours * 60.0 / tg_minutes);
  if (n <= 0) throw std::runtime_error("horizon must cover at least one sample");
  const std::uint64_t seed = opt.seed.value_or(18);
  const double scale = opt.scale.value_or(1.0);

  mfdr::RngStream rng(seed, /*stream=*/0);
  mfdr::ReferenceFile ref;
  ref.tg_minutes = tg_minutes;
  ref.r0 = mfdr::generate_regulation(coeffs, n, rng);
  ref.r = mfdr::lowpass_reference(ref.r0, cutoff);
  for (double& v : ref.r) v *= scale;
  ref.t_minutes.resize(ref.r0.size());
  for (std::size_t i = 0; i < ref.r0.size(); ++i) ref.t_minutes[i] = i * tg_minutes;

  std::filesystem::create_directories(opt.out_dir);
  const std::string ref_path = opt.out_dir + "/reference.csv";
  mfdr::write_reference_csv(ref, ref_path);
  std::vector<std::string> inputs;
  if (!coeffs_path.empty()) inputs.push_back(coeffs_path);
  mfdr::write_manifest(opt.out_dir + "/reference.manifest.json", "gen-ref",
                       nullptr, inputs, {ref_path}, seconds_since(start), seed);
  std::cout << "wrote " << ref_path << " (" << n << " rows)\n";
  return 0;
}

int cmd_simulate(const CommonOptions& opt) {
  const auto start = Clock::now();
  mfdr::SimConfig config = resolve_config(opt);
  config.collect_qos_samples = true;
  const mfdr::ReferenceFile ref = mfdr::read_reference_csv(opt.reference_path);
  const std::vector<double> r =
      clip_to_hours(ref.r, opt.hours.value_or(0.0), ref.tg_minutes);

  const mfdr::ControlledFamily family =
      mfdr::build_nominal_pool_model(config.i_max, config.switch_prob);
  const mfdr::SimTrace trace = mfdr::run_closed_loop(config, r, family);

  std::filesystem::create_directories(opt.out_dir);
  const std::string trace_path = opt.out_dir + "/trace.csv";
  const std::string disc_path = opt.out_dir + "/qos_hist_discounted.csv";
  const std::string window_path = opt.out_dir + "/qos_hist_window.csv";
  mfdr::write_trace_csv(trace, config.grid_period_minutes, trace_path);

  std::vector<double> pooled(trace.qos_samples.begin(), trace.qos_samples.end());
  mfdr::write_histogram_csv(mfdr::make_histogram(pooled, config.hist_bin_width),
                            disc_path);
  mfdr::write_histogram_csv(
      mfdr::make_histogram(trace.final_window_qos_hours, config.hist_bin_width),
      window_path);

  mfdr::write_manifest(opt.out_dir + "/manifest.json", "simulate", &config,
                       {opt.reference_path}, {trace_path, disc_path, window_path},
                       seconds_since(start), config.seed);
  std::cout << "simulated " << r.size() << " grid steps, N = " << config.n_loads
            << ", opt-out " << (config.opt_out_enabled ? "on" : "off")
            << ", QoS bound violations = " << trace.bound_violations << "\n";
  return 0;
}

int cmd_predict(const CommonOptions& opt, const std::string& zeta_trace_path) {
  const auto start = Clock::now();
  mfdr::SimConfig config = resolve_config(opt);
  const mfdr::ReferenceFile ref = mfdr::read_reference_csv(opt.reference_path);
  std::vector<double> r =
      clip_to_hours(ref.r, opt.hours.value_or(0.0), ref.tg_minutes);
  for (double& v : r) v *= config.reference_scale;

  if (zeta_trace_path.empty()) {
    throw std::invalid_argument(
        "predict requires --zeta-trace from a prior simulate run");
  }
  const std::vector<double> zeta =
      mfdr::read_csv_column(zeta_trace_path, "zeta");

  const mfdr::ControlledFamily family =
      mfdr::build_nominal_pool_model(config.i_max, config.switch_prob);
  const mfdr::Zeta1Model zmodel = mfdr::fit_zeta_model(zeta, config.m);
  const mfdr::DisturbancePSD dpsd =
      mfdr::disturbance_psd(family, zmodel, config.m, 4096);
  mfdr::Vector ell(family.dim());
  for (int i = 0; i < family.dim(); ++i) {
    ell[i] = mfdr::ell_signed(mfdr::pool_state_from_index(i, config.i_max));
  }
  const double var_qos = mfdr::qos_variance(family, dpsd, ell, config.beta);
  const std::vector<double> two_r_beta =
      mfdr::predict_mean_qos(r, config.beta, config.m);
  double max_abs_2r = 0.0;
  for (double v : two_r_beta) max_abs_2r = std::max(max_abs_2r, std::abs(v));

  std::filesystem::create_directories(opt.out_dir);
  const std::string rbeta_path = opt.out_dir + "/rbeta.csv";
  {
    std::ofstream out(rbeta_path);
    out.precision(12);
    out << "t,t_minutes,two_r_beta\n";
    for (std::size_t t = 0; t < two_r_beta.size(); ++t) {
      out << t << ',' << t * ref.tg_minutes << ',' << two_r_beta[t] << '\n';
    }
  }
  const std::string report_path = opt.out_dir + "/prediction.json";
  nlohmann::json report{
      {"sigma_qos", std::sqrt(var_qos)},
      {"variance_qos", var_qos},
      {"zeta_model", {{"rho", zmodel.rho}, {"sigma_zeta2", zmodel.sigma_zeta2}}},
      {"gaussian_overlay", {{"mean", 0.0}, {"sigma", std::sqrt(var_qos)}}},
      {"truncated_gaussian_overlay",
       {{"mean", 0.0},
        {"sigma", std::sqrt(var_qos)},
        {"lower", config.bounds.lower},
        {"upper", config.bounds.upper}}},
      {"max_abs_two_r_beta", max_abs_2r},
      {"predicts_opt_out_saturation", max_abs_2r > config.bounds.upper}};
  {
    std::ofstream out(report_path);
    out << report.dump(2) << '\n';
  }
  mfdr::write_manifest(opt.out_dir + "/prediction.manifest.json", "predict",
                       &config, {opt.reference_path, zeta_trace_path},
                       {report_path, rbeta_path}, seconds_since(start),
                       config.seed);
  std::cout << "predicted sigma_qos = " << std::sqrt(var_qos)
            << ", max |2 R_beta| = " << max_abs_2r << "\n";
  return 0;
}

int cmd_fit_arma(const CommonOptions& opt, const std::string& signal_path,
                 const std::string& column) {
  const auto start = Clock::now();
  const std::vector<double> signal = mfdr::read_csv_column(signal_path, column);
  const mfdr::ElsResult fit = mfdr::fit_arma_els(signal);

  // Residual whiteness of the reconstructed innovations.
  std::vector<double> w(signal.size(), 0.0);
  for (std::size_t t = 2; t < signal.size(); ++t) {
    w[t] = signal[t] + fit.coeffs.a1 * signal[t - 1] +
           fit.coeffs.a2 * signal[t - 2] - fit.coeffs.b1 * w[t - 1];
  }
  const LjungBox lb = ljung_box(w, 20, 3);

  std::filesystem::create_directories(opt.out_dir);
  const std::string out_path = opt.out_dir + "/arma.json";
  mfdr::write_arma_json(fit.coeffs, out_path, lb.stat, lb.dof, lb.p_value);
  mfdr::write_manifest(opt.out_dir + "/arma.manifest.json", "fit-arma", nullptr,
                       {signal_path}, {out_path}, seconds_since(start), 0);
  std::cout << "fit [a1,a2,b1] = [" << fit.coeffs.a1 << ", " << fit.coeffs.a2
            << ", " << fit.coeffs.b1 << "], sigma_w2 = " << fit.coeffs.sigma_w2
            << ", " << fit.sweeps << " sweeps, Ljung-Box p = " << lb.p_value
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomized demand-response simulator and QoS risk toolkit"};
  app.require_subcommand(1);
  CommonOptions opt;

  auto* gen = app.add_subcommand("gen-ref", "Generate a regulation reference");
  double hours = 400.0, tg_minutes = 5.0, cutoff = kDefaultCutoff;
  std::string coeffs_path;
  gen->add_option("--hours", hours, "Signal length in hours");
  gen->add_option("--tg-minutes", tg_minutes, "Grid sampling period");
  gen->add_option("--cutoff", cutoff, "Low-pass pole, cycles per sample");
  gen->add_option("--coeffs", coeffs_path, "ARMA coefficients JSON");
  gen->add_option("--out", opt.out_dir, "Output directory");
  gen->add_option("--seed", opt.seed, "Master seed");
  gen->add_option("--scale", opt.scale, "Reference scaling factor");

  auto add_common = [&](CLI::App* cmd, bool need_ref) {
    cmd->add_option("--config", opt.config_path, "Config JSON");
    auto* ref = cmd->add_option("--reference", opt.reference_path,
                                "Reference CSV from gen-ref");
    if (need_ref) ref->required();
    cmd->add_option("--out", opt.out_dir, "Output directory");
    cmd->add_option("--seed", opt.seed, "Master seed override");
    cmd->add_option("--scale", opt.scale, "Reference scale override");
    cmd->add_option("--n-loads", opt.n_loads, "Population size override");
    cmd->add_option("--hours", opt.hours, "Clip the reference to this horizon");
    cmd->add_flag("--no-opt-out", opt.no_opt_out, "Disable the opt-out override");
  };

  auto* sim = app.add_subcommand("simulate", "Run the closed-loop population");
  add_common(sim, true);

  auto* pred = app.add_subcommand("predict", "Mean/variance QoS prediction");
  std::string zeta_trace_path;
  add_common(pred, true);
  pred->add_option("--zeta-trace", zeta_trace_path,
                   "trace.csv from a simulate run (zeta column)");

  auto* fit = app.add_subcommand("fit-arma", "ELS fit of an ARMA(2,1) model");
  std::string signal_path, column = "r0";
  fit->add_option("--signal", signal_path, "CSV with the signal")->required();
  fit->add_option("--column", column, "CSV column to fit");
  fit->add_option("--out", opt.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitConfigError;
  }

  try {
    if (gen->parsed()) return cmd_gen_ref(opt, hours, tg_minutes, cutoff, coeffs_path);
    if (sim->parsed()) return cmd_simulate(opt);
    if (pred->parsed()) return cmd_predict(opt, zeta_trace_path);
    if (fit->parsed()) return cmd_fit_arma(opt, signal_path, column);
  } catch (const std::invalid_argument& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitNumericalError;
  }
  return kExitConfigError;
}
