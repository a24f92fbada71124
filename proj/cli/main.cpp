#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "io.hpp"
#include "polyfwd/calibrate.hpp"
#include "polyfwd/errors.hpp"
#include "polyfwd/pricing.hpp"
#include "polyfwd/qkf.hpp"
#include "polyfwd/simhedge.hpp"

namespace {

namespace fs = std::filesystem;
using polyfwd::cli::format_double;
using polyfwd::cli::json;

struct Options {
  std::string config_path;
  std::string out_dir;
  std::string quotes_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  long dump_paths = 0;
  // price overrides
  double t = 0.0, t1 = 0.0, t2 = 0.0;
  bool t_given = false, t1_given = false, t2_given = false;
};

double get_or(const json& section, const char* key, double fallback) {
  const auto it = section.find(key);
  return it == section.end() ? fallback : it->get<double>();
}

const json& section_or_empty(const json& config, const char* name) {
  static const json empty = json::object();
  const auto it = config.find(name);
  if (it == config.end()) return empty;
  if (!it->is_object()) {
    throw std::invalid_argument(std::string("config: '") + name + "' must be an object");
  }
  return *it;
}

bool is_three_factor(const json& config) {
  const auto it = config.find("spec");
  if (it == config.end()) return false;
  const std::string s = it->get<std::string>();
  if (s == "two_factor") return false;
  if (s == "three_factor") return true;
  throw std::invalid_argument("config: spec must be 'two_factor' or 'three_factor'");
}

Eigen::VectorXd state_from(const json& section, const Eigen::VectorXd& fallback) {
  const auto it = section.find("x");
  if (it == section.end()) return fallback;
  if (!it->is_array() || it->size() != static_cast<size_t>(fallback.size())) {
    throw std::invalid_argument("config: 'x' must be an array matching the state dimension");
  }
  Eigen::VectorXd x(fallback.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = (*it)[static_cast<size_t>(i)].get<double>();
  return x;
}

fs::path require_out(const Options& opt) {
  if (opt.out_dir.empty()) {
    throw std::invalid_argument("this subcommand requires --out DIR");
  }
  fs::create_directories(opt.out_dir);
  return opt.out_dir;
}

void finish(const Options& opt, const std::string& command, std::uint64_t seed) {
  if (opt.out_dir.empty()) return;
  fs::create_directories(opt.out_dir);
  polyfwd::cli::write_manifest(opt.out_dir, command,
                               polyfwd::cli::read_file(opt.config_path), seed);
}

std::vector<std::pair<double, double>> yearly_maturities(const json& section,
                                                         const Options& opt) {
  const double t1_start = opt.t1_given ? opt.t1 : get_or(section, "start", 1.0);
  const auto count = static_cast<long>(get_or(section, "count", 10.0));
  if (count < 1) throw std::invalid_argument("config: maturity count must be >= 1");
  std::vector<std::pair<double, double>> maturities;
  maturities.reserve(static_cast<size_t>(count));
  for (long i = 0; i < count; ++i) {
    const double start = t1_start + static_cast<double>(i);
    maturities.emplace_back(start, start + 1.0);
  }
  return maturities;
}

// --- Subcommands --------------------------------------------------------------

void run_price(const json& config, const Options& opt) {
  const json& section = section_or_empty(config, "price");
  const double t = opt.t_given ? opt.t : get_or(section, "t", 0.0);
  const bool has_t1 = opt.t1_given || section.contains("t1");
  if (!has_t1) throw std::invalid_argument("price: t1 missing (flag --t1 or config price.t1)");
  const double t1 = opt.t1_given ? opt.t1 : section.at("t1").get<double>();
  const bool has_t2 = opt.t2_given || section.contains("t2");

  double value;
  if (is_three_factor(config)) {
    const auto p = polyfwd::cli::three_factor_from_json(config);
    Eigen::VectorXd x0(3);
    x0 << p.z0, p.y0, p.r0;
    const Eigen::Vector3d x = state_from(section, x0);
    value = has_t2 ? polyfwd::forward_period(
                         p, polyfwd::Measure::Q, t, t1,
                         opt.t2_given ? opt.t2 : section.at("t2").get<double>(), x)
                   : polyfwd::forward_instant(p, polyfwd::Measure::Q, t, t1, x);
  } else {
    const auto p = polyfwd::cli::two_factor_from_json(config);
    Eigen::VectorXd x0(2);
    x0 << p.z0, p.y0;
    const Eigen::Vector2d x = state_from(section, x0);
    value = has_t2 ? polyfwd::forward_period(
                         p, polyfwd::Measure::Q, t, t1,
                         opt.t2_given ? opt.t2 : section.at("t2").get<double>(), x)
                   : polyfwd::forward_instant(p, polyfwd::Measure::Q, t, t1, x);
  }
  std::cout << format_double(value) << "\n";
  finish(opt, "price", 0);
}

void run_curve(const json& config, const Options& opt) {
  const fs::path out = require_out(opt);
  const json& section = section_or_empty(config, "curve");
  const double t = opt.t_given ? opt.t : get_or(section, "t", 0.0);
  const auto maturities = yearly_maturities(section, opt);

  std::vector<double> prices;
  if (is_three_factor(config)) {
    const auto p = polyfwd::cli::three_factor_from_json(config);
    Eigen::VectorXd x0(3);
    x0 << p.z0, p.y0, p.r0;
    prices = polyfwd::forward_curve(p, polyfwd::Measure::Q, t,
                                    state_from(section, x0), maturities);
  } else {
    const auto p = polyfwd::cli::two_factor_from_json(config);
    Eigen::VectorXd x0(2);
    x0 << p.z0, p.y0;
    prices = polyfwd::forward_curve(p, polyfwd::Measure::Q, t,
                                    state_from(section, x0), maturities);
  }

  std::ostringstream csv;
  csv << "t1,t2,price\n";
  for (size_t i = 0; i < maturities.size(); ++i) {
    csv << format_double(maturities[i].first) << ',' << format_double(maturities[i].second)
        << ',' << format_double(prices[i]) << '\n';
  }
  polyfwd::cli::atomic_write(out / "curve.csv", csv.str());
  finish(opt, "curve", 0);
}

void run_corr(const json& config, const Options& opt) {
  const fs::path out = require_out(opt);
  const json& section = section_or_empty(config, "corr");
  const double t = opt.t_given ? opt.t : get_or(section, "t", 0.0);
  const bool symmetrized = section.contains("symmetrized") &&
                           section.at("symmetrized").get<bool>();
  const auto legs_it = section.find("legs");
  if (legs_it == section.end() || !legs_it->is_array() || legs_it->empty()) {
    throw std::invalid_argument("corr: config corr.legs must be a nonempty array of [t1,t2]");
  }
  std::vector<std::pair<double, double>> legs;
  for (const auto& leg : *legs_it) {
    if (!leg.is_array() || leg.size() != 2) {
      throw std::invalid_argument("corr: each leg must be a [t1,t2] pair");
    }
    legs.emplace_back(leg[0].get<double>(), leg[1].get<double>());
  }

  const size_t n = legs.size();
  Eigen::MatrixXd corr(n, n);
  if (is_three_factor(config)) {
    const auto p = polyfwd::cli::three_factor_from_json(config);
    Eigen::VectorXd x0(3);
    x0 << p.z0, p.y0, p.r0;
    const Eigen::Vector3d x = state_from(section, x0);
    for (size_t a = 0; a < n; ++a)
      for (size_t b = 0; b < n; ++b)
        corr(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            polyfwd::inst_correlation(p, t, legs[a], legs[b], x, symmetrized);
  } else {
    const auto p = polyfwd::cli::two_factor_from_json(config);
    Eigen::VectorXd x0(2);
    x0 << p.z0, p.y0;
    const Eigen::Vector2d x = state_from(section, x0);
    for (size_t a = 0; a < n; ++a)
      for (size_t b = 0; b < n; ++b)
        corr(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            polyfwd::inst_correlation(p, t, legs[a], legs[b], x, symmetrized);
  }

  std::ostringstream csv;
  csv << "leg";
  for (const auto& leg : legs) {
    csv << ',' << format_double(leg.first) << '-' << format_double(leg.second);
  }
  csv << '\n';
  for (size_t a = 0; a < n; ++a) {
    csv << format_double(legs[a].first) << '-' << format_double(legs[a].second);
    for (size_t b = 0; b < n; ++b) {
      csv << ',' << format_double(corr(static_cast<Eigen::Index>(a),
                                       static_cast<Eigen::Index>(b)));
    }
    csv << '\n';
  }
  polyfwd::cli::atomic_write(out / "correlation.csv", csv.str());
  finish(opt, "corr", 0);
}

void run_premium(const json& config, const Options& opt) {
  const fs::path out = require_out(opt);
  if (is_three_factor(config)) {
    throw std::invalid_argument("premium: requires the two-factor specification");
  }
  const json& section = section_or_empty(config, "premium");
  const double t = opt.t_given ? opt.t : get_or(section, "t", 0.0);
  const auto p = polyfwd::cli::two_factor_from_json(config);
  const auto mpr = polyfwd::cli::mpr_from_json(config);
  Eigen::VectorXd x0(2);
  x0 << p.z0, p.y0;
  const Eigen::Vector2d x = state_from(section, x0);
  const auto maturities = yearly_maturities(section, opt);

  std::ostringstream csv;
  csv << "t1,t2,premium\n";
  for (const auto& [t1, t2] : maturities) {
    csv << format_double(t1) << ',' << format_double(t2) << ','
        << format_double(polyfwd::risk_premium(p, mpr, t, t1, t2, x)) << '\n';
  }
  polyfwd::cli::atomic_write(out / "premium.csv", csv.str());
  finish(opt, "premium", 0);
}

std::string quotes_path_for(const json& config, const Options& opt, const char* section) {
  if (!opt.quotes_path.empty()) return opt.quotes_path;
  const json& s = section_or_empty(config, section);
  const auto it = s.find("quotes");
  if (it == s.end()) {
    throw std::invalid_argument(std::string(section) +
                                ": quote CSV missing (flag --quotes or config " + section +
                                ".quotes)");
  }
  return it->get<std::string>();
}

void write_error_reports(const fs::path& out, const polyfwd::ErrorReport& report,
                         const std::vector<std::string>& iso_dates) {
  std::ostringstream per_contract;
  per_contract << "nearby,mean,stddev,q25,median,q75,count\n";
  for (const auto& [j, st] : report.per_contract) {
    per_contract << j << ',' << format_double(st.mean) << ',' << format_double(st.stddev)
                 << ',' << format_double(st.q25) << ',' << format_double(st.median) << ','
                 << format_double(st.q75) << ',' << st.count << '\n';
  }
  polyfwd::cli::atomic_write(out / "per_contract_errors.csv", per_contract.str());

  std::ostringstream per_date;
  per_date << "quote_date,mean_rel_error\n";
  for (size_t k = 0; k < report.per_date_mean.size(); ++k) {
    per_date << iso_dates[k] << ',' << format_double(report.per_date_mean[k]) << '\n';
  }
  polyfwd::cli::atomic_write(out / "per_date_errors.csv", per_date.str());
}

void run_filter(const json& config, const Options& opt) {
  const fs::path out = require_out(opt);
  const auto ingest = polyfwd::cli::ingest_quotes(quotes_path_for(config, opt, "filter"));
  const auto p = polyfwd::cli::two_factor_from_json(config);
  const auto mpr = polyfwd::cli::mpr_from_json(config);
  const bool weighted =
      section_or_empty(config, "filter").contains("ls_spread_weighted") &&
      config.at("filter").at("ls_spread_weighted").get<bool>();

  const polyfwd::FilterOutput result = polyfwd::run_filter(p, mpr, ingest.series, weighted);

  json summary;
  summary["log_likelihood"] = result.log_likelihood;
  summary["ls_error"] = result.ls_error;
  summary["n_dates"] = ingest.series.dates.size();
  json states = json::array();
  static const char* kStateNames[5] = {"z", "y", "zz", "yz", "yy"};
  for (size_t k = 0; k < ingest.series.dates.size(); ++k) {
    json row;
    row["quote_date"] = ingest.iso_dates[k];
    row["t"] = ingest.series.dates[k];
    for (int i = 0; i < 5; ++i) row[kStateNames[i]] = result.states[k].x_filt[i];
    states.push_back(row);
  }
  summary["filtered_states"] = states;
  polyfwd::cli::atomic_write(out / "filter_output.json", summary.dump(2) + "\n");

  std::ostringstream rel;
  rel << "quote_date,nearby,observed,model_filtered,model_predicted,rel_error_filtered,"
         "rel_error_predicted\n";
  for (size_t k = 0; k < ingest.series.dates.size(); ++k) {
    for (const auto& [j, quote] : ingest.series.rows[k]) {
      rel << ingest.iso_dates[k] << ',' << j << ',' << format_double(quote.price) << ','
          << format_double(result.model_prices[k].at(j)) << ','
          << format_double(result.model_prices_pred[k].at(j)) << ','
          << format_double(result.relative_errors[k].at(j)) << ','
          << format_double(result.relative_errors_pred[k].at(j)) << '\n';
    }
  }
  polyfwd::cli::atomic_write(out / "relative_errors.csv", rel.str());

  write_error_reports(out, polyfwd::relative_errors(result, ingest.series),
                      ingest.iso_dates);
  finish(opt, "filter", 0);
}

void run_calibrate(const json& config, const Options& opt) {
  const fs::path out = require_out(opt);
  const auto ingest =
      polyfwd::cli::ingest_quotes(quotes_path_for(config, opt, "calibration"));
  polyfwd::CalibrationConfig cal = polyfwd::cli::calibration_from_json(config);
  if (opt.seed_given) cal.seed = opt.seed;

  const polyfwd::CalibrationResult result = polyfwd::calibrate(ingest.series, cal);

  json doc;
  doc["params"] = polyfwd::to_flat(result.params);
  json mpr;
  for (const auto& [key, value] : polyfwd::to_flat(result.params, result.mpr)) mpr[key] = value;
  doc["params_with_mpr"] = mpr;
  doc["final_ls"] = result.final_ls;
  doc["final_log_likelihood"] = result.final_log_likelihood;
  doc["generations"] = result.generations;
  doc["seed"] = result.seed;
  doc["overall_mean_rel_error"] = result.errors.overall_mean;
  doc["ls_trajectory"] = result.ls_trajectory;
  doc["ml_trajectory"] = result.ml_trajectory;
  json per_contract;
  for (const auto& [j, st] : result.errors.per_contract) {
    json row;
    row["mean"] = st.mean;
    row["stddev"] = st.stddev;
    row["q25"] = st.q25;
    row["median"] = st.median;
    row["q75"] = st.q75;
    row["count"] = st.count;
    per_contract[std::to_string(j)] = row;
  }
  doc["per_contract_errors"] = per_contract;
  polyfwd::cli::atomic_write(out / "calibration_result.json", doc.dump(2) + "\n");

  write_error_reports(out, result.errors, ingest.iso_dates);
  finish(opt, "calibrate", cal.seed);
}

void run_simulate(const json& config, const Options& opt) {
  const fs::path out = require_out(opt);
  polyfwd::SimConfig sim = polyfwd::cli::sim_from_json(config);
  if (opt.seed_given) sim.seed = opt.seed;

  polyfwd::SurfaceSummary summary;
  if (sim.spec == polyfwd::ModelSpec::three_factor) {
    const auto p = polyfwd::cli::three_factor_from_json(config);
    summary = polyfwd::summarize_surfaces(p, sim);
    const polyfwd::ClampStats clamps = polyfwd::boundary_clamp_stats(p, sim);
    std::cout << "clamp_rate_per_step " << format_double(clamps.rate()) << "\n";
  } else {
    const auto p = polyfwd::cli::two_factor_from_json(config);
    const auto mpr = polyfwd::cli::mpr_from_json(config);
    summary = polyfwd::summarize_surfaces(p, mpr, sim);
  }

  std::ostringstream csv;
  csv << "time,nearby,mean,stddev\n";
  for (Eigen::Index m = 0; m < summary.times.size(); ++m) {
    for (int l = 1; l <= sim.nearby_count; ++l) {
      csv << format_double(summary.times[m]) << ',' << l << ','
          << format_double(summary.mean(m, l - 1)) << ','
          << format_double(summary.stddev(m, l - 1)) << '\n';
    }
  }
  polyfwd::cli::atomic_write(out / "surface_summary.csv", csv.str());

  if (opt.dump_paths > 0) {
    std::ostringstream dump;
    dump << "path,time,nearby,price\n";
    const int limit = static_cast<int>(std::min<long>(opt.dump_paths, sim.n_paths));
    polyfwd::SimConfig head = sim;
    head.n_paths = limit;
    auto emit = [&](int path, const polyfwd::PathSurface& surf) {
      for (Eigen::Index m = 0; m < surf.times.size(); ++m) {
        for (int l = 1; l <= sim.nearby_count; ++l) {
          dump << path << ',' << format_double(surf.times[m]) << ',' << l << ','
               << format_double(surf.nearby(m, l - 1)) << '\n';
        }
      }
    };
    if (sim.spec == polyfwd::ModelSpec::three_factor) {
      const auto p = polyfwd::cli::three_factor_from_json(config);
      const polyfwd::SurfaceCache cache(p, head.steps_per_year, head.nearby_count);
      polyfwd::for_each_path(p, head, [&](int path, const Eigen::MatrixXd& states) {
        emit(path, polyfwd::forward_surface(states, cache, head.nearby_count));
      });
    } else {
      const auto p = polyfwd::cli::two_factor_from_json(config);
      const auto mpr = polyfwd::cli::mpr_from_json(config);
      const polyfwd::SurfaceCache cache(p, head.steps_per_year, head.nearby_count);
      polyfwd::for_each_path(p, mpr, head, [&](int path, const Eigen::MatrixXd& states) {
        emit(path, polyfwd::forward_surface(states, cache, head.nearby_count));
      });
    }
    polyfwd::cli::atomic_write(out / "paths.csv", dump.str());
  }
  finish(opt, "simulate", sim.seed);
}

void run_hedge(const json& config, const Options& opt) {
  const fs::path out = require_out(opt);
  if (is_three_factor(config)) {
    throw std::invalid_argument("hedge: requires the two-factor specification");
  }
  polyfwd::SimConfig sim = polyfwd::cli::sim_from_json(config);
  if (opt.seed_given) sim.seed = opt.seed;
  const json& section = section_or_empty(config, "hedge");

  std::vector<int> horizons;
  const auto hit = section.find("horizons");
  if (hit == section.end() || !hit->is_array() || hit->empty()) {
    throw std::invalid_argument("hedge: config hedge.horizons must be a nonempty array");
  }
  for (const auto& h : *hit) horizons.push_back(h.get<int>());

  polyfwd::Rebalance rebalance = polyfwd::Rebalance::monthly;
  if (section.contains("rebalance")) {
    const std::string r = section.at("rebalance").get<std::string>();
    if (r == "monthly") {
      rebalance = polyfwd::Rebalance::monthly;
    } else if (r == "every_step") {
      rebalance = polyfwd::Rebalance::every_step;
    } else {
      throw std::invalid_argument("hedge: rebalance must be 'monthly' or 'every_step'");
    }
  }

  const auto p = polyfwd::cli::two_factor_from_json(config);
  const auto mpr = polyfwd::cli::mpr_from_json(config);
  const auto stats = polyfwd::run_hedge_study(p, mpr, sim, horizons, rebalance);

  std::ostringstream csv;
  csv << "horizon,hedged_std,hedged_skew,unhedged_std,unhedged_skew,m\n";
  for (const auto& [h, st] : stats) {
    csv << h << ',' << format_double(st.hedged_std) << ',' << format_double(st.hedged_skew)
        << ',' << format_double(st.unhedged_std) << ','
        << format_double(st.unhedged_skew) << ',' << st.m << '\n';
  }
  polyfwd::cli::atomic_write(out / "exposure_stats.csv", csv.str());

  for (const auto& [h, st] : stats) {
    std::ostringstream hist;
    hist << "series,bin,lo,hi,count\n";
    auto emit = [&](const char* name, const polyfwd::Histogram& hg) {
      const double width = (hg.hi - hg.lo) / 100.0;
      for (size_t b = 0; b < hg.counts.size(); ++b) {
        hist << name << ',' << b << ',' << format_double(hg.lo + width * static_cast<double>(b))
             << ',' << format_double(hg.lo + width * static_cast<double>(b + 1)) << ','
             << hg.counts[b] << '\n';
      }
    };
    emit("hedged", st.hedged_hist);
    emit("unhedged", st.unhedged_hist);
    polyfwd::cli::atomic_write(out / ("histogram_" + std::to_string(h) + "y.csv"),
                               hist.str());
  }
  finish(opt, "hedge", sim.seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polyfwd: forward pricing, filtering, calibration, simulation, and hedging\n"
               "for quadratic polynomial-diffusion models of yearly delivery contracts"};
  app.require_subcommand(1);
  app.fallthrough();

  Options opt;
  app.add_option("--config", opt.config_path, "JSON config file")->required();
  app.add_option("--out", opt.out_dir, "output directory");
  auto* seed_flag = app.add_option("--seed", opt.seed, "seed override");
  auto* t_flag = app.add_option("--t", opt.t, "valuation time (years)");
  auto* t1_flag = app.add_option("--t1", opt.t1, "delivery start / first maturity");
  auto* t2_flag = app.add_option("--t2", opt.t2, "delivery end");
  app.add_option("--quotes", opt.quotes_path, "quote CSV path");
  app.add_option("--dump-paths", opt.dump_paths, "also dump the first N path surfaces");

  app.add_subcommand("price", "single forward price to stdout");
  app.add_subcommand("curve", "forward curve over yearly delivery periods");
  app.add_subcommand("corr", "instantaneous correlation matrix for delivery legs");
  app.add_subcommand("premium", "forward risk premium term structure");
  app.add_subcommand("filter", "run the quadratic Kalman filter on quotes");
  app.add_subcommand("calibrate", "staged LS -> ML parameter estimation");
  app.add_subcommand("simulate", "Monte Carlo forward surfaces");
  app.add_subcommand("hedge", "rolling hedge study with exposure statistics");

  try {
    app.parse(argc, argv);
    opt.seed_given = seed_flag->count() > 0;
    opt.t_given = t_flag->count() > 0;
    opt.t1_given = t1_flag->count() > 0;
    opt.t2_given = t2_flag->count() > 0;

    const json config = polyfwd::cli::load_config(opt.config_path);
    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "price") {
      run_price(config, opt);
    } else if (command == "curve") {
      run_curve(config, opt);
    } else if (command == "corr") {
      run_corr(config, opt);
    } else if (command == "premium") {
      run_premium(config, opt);
    } else if (command == "filter") {
      run_filter(config, opt);
    } else if (command == "calibrate") {
      run_calibrate(config, opt);
    } else if (command == "simulate") {
      run_simulate(config, opt);
    } else {
      run_hedge(config, opt);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const polyfwd::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const polyfwd::numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
