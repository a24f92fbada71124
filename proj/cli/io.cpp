#include "io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include "polyfwd/errors.hpp"

namespace polyfwd::cli {

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  static const int lengths[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return lengths[m - 1];
}

std::string trim_cr(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double_field(const std::string& text, int line_no, const char* what) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
    throw data_error("line " + std::to_string(line_no) + ": bad " + what + " '" + text + "'");
  }
  return v;
}

long parse_int_field(const std::string& text, int line_no, const char* what) {
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(text.c_str(), &end, 10);
  if (end == text.c_str() || *end != '\0' || errno == ERANGE) {
    throw data_error("line " + std::to_string(line_no) + ": bad " + what + " '" + text + "'");
  }
  return v;
}

}  // namespace

// --- Dates -------------------------------------------------------------------

long days_from_civil(const CivilDate& date) {
  // Howard Hinnant's civil-days algorithm; day 0 is 1970-01-01.
  int y = date.y;
  const int m = date.m;
  const int d = date.d;
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

CivilDate civil_from_days(long days) {
  long z = days + 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

CivilDate parse_iso_date(const std::string& text, int line_no) {
  const std::string where =
      line_no > 0 ? "line " + std::to_string(line_no) + ": " : std::string();
  int y = 0, m = 0, d = 0;
  char extra = 0;
  if (text.size() != 10 ||
      std::sscanf(text.c_str(), "%4d-%2d-%2d%c", &y, &m, &d, &extra) != 3) {
    throw data_error(where + "bad ISO-8601 date '" + text + "'");
  }
  if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m)) {
    throw data_error(where + "impossible calendar date '" + text + "'");
  }
  return {y, m, d};
}

std::string format_iso_date(const CivilDate& date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", date.y, date.m, date.d);
  return buf;
}

double year_fraction(const CivilDate& date, const CivilDate& anchor) {
  return static_cast<double>(days_from_civil(date) - days_from_civil(anchor)) / 365.25;
}

CivilDate date_from_fraction(double t, const CivilDate& anchor) {
  return civil_from_days(days_from_civil(anchor) + std::lround(t * 365.25));
}

// --- CSV ingestion -----------------------------------------------------------

IngestResult ingest_quotes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open quote file " + path.string());

  std::string line;
  if (!std::getline(in, line) || trim_cr(line) != "quote_date,nearby,price,spread") {
    throw data_error(path.string() + ": expected header 'quote_date,nearby,price,spread'");
  }

  struct Key {
    long days;
    int nearby;
    bool operator<(const Key& o) const {
      return days != o.days ? days < o.days : nearby < o.nearby;
    }
  };
  std::map<Key, Quote> cells;
  std::map<long, std::string> iso_by_days;

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim_cr(line);
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw data_error("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                       std::to_string(fields.size()));
    }
    const CivilDate date = parse_iso_date(fields[0], line_no);
    const long nearby = parse_int_field(fields[1], line_no, "nearby");
    if (nearby < 1 || nearby > 10) {
      throw data_error("line " + std::to_string(line_no) + ": nearby must be in 1..10");
    }
    const double price = parse_double_field(fields[2], line_no, "price");
    if (!(price > 0.0)) {
      throw data_error("line " + std::to_string(line_no) + ": price must be positive");
    }
    Quote quote{price, std::nullopt};
    if (!fields[3].empty()) {
      const double spread = parse_double_field(fields[3], line_no, "spread");
      if (spread < 0.0) {
        throw data_error("line " + std::to_string(line_no) + ": spread must be >= 0");
      }
      quote.spread = spread;
    }
    const Key key{days_from_civil(date), static_cast<int>(nearby)};
    if (!cells.emplace(key, quote).second) {
      throw data_error("line " + std::to_string(line_no) + ": duplicate (" + fields[0] +
                       ", nearby " + fields[1] + ")");
    }
    iso_by_days.emplace(key.days, fields[0]);
  }

  IngestResult result;
  result.series.j_max = 10;
  if (cells.empty()) return result;

  const long first_days = cells.begin()->first.days;
  result.anchor = CivilDate{civil_from_days(first_days).y, 1, 1};
  const long anchor_days = days_from_civil(result.anchor);

  long current = -1;
  for (const auto& [key, quote] : cells) {
    if (key.days != current) {
      current = key.days;
      result.series.dates.push_back(
          static_cast<double>(key.days - anchor_days) / 365.25);
      result.series.rows.emplace_back();
      result.iso_dates.push_back(iso_by_days.at(key.days));
    }
    result.series.rows.back()[key.nearby] = quote;
  }
  return result;
}

void emit_quotes_csv(const std::filesystem::path& path, const QuoteSeries& series,
                     const CivilDate& anchor) {
  std::ostringstream out;
  out << "quote_date,nearby,price,spread\n";
  for (size_t k = 0; k < series.dates.size(); ++k) {
    const std::string iso = format_iso_date(date_from_fraction(series.dates[k], anchor));
    for (const auto& [j, quote] : series.rows[k]) {
      out << iso << ',' << j << ',' << format_double(quote.price) << ',';
      if (quote.spread) out << format_double(*quote.spread);
      out << '\n';
    }
  }
  atomic_write(path, out.str());
}

// --- Formatting and files ----------------------------------------------------

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw data_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const std::string& config_bytes, std::uint64_t seed) {
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_bytes)));
  char stamp[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);

  json manifest;
  manifest["command"] = command;
  manifest["config_fnv1a64"] = hash;
  manifest["seed"] = seed;
  manifest["versions"]["polyfwd"] = "1.0.0";
  manifest["versions"]["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                                  std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION);
  manifest["timestamp_utc"] = stamp;  // the only field exempt from byte-identity
  atomic_write(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

// --- Config ------------------------------------------------------------------

json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
}

namespace {

FlatParams flat_from_section(const json& section, const char* name) {
  if (!section.is_object()) {
    throw std::invalid_argument(std::string("config: '") + name + "' must be an object");
  }
  FlatParams flat;
  for (const auto& [key, value] : section.items()) {
    if (!value.is_number()) {
      throw std::invalid_argument(std::string("config: '") + name + "." + key +
                                  "' must be a number");
    }
    flat[key] = value.get<double>();
  }
  return flat;
}

const json& require_section(const json& config, const char* name) {
  const auto it = config.find(name);
  if (it == config.end()) {
    throw std::invalid_argument(std::string("config: missing section '") + name + "'");
  }
  return *it;
}

}  // namespace

TwoFactorParams two_factor_from_json(const json& config) {
  return two_factor_from_flat(flat_from_section(require_section(config, "params"), "params"));
}

ThreeFactorParams three_factor_from_json(const json& config) {
  return three_factor_from_flat(
      flat_from_section(require_section(config, "three_factor_params"), "three_factor_params"));
}

MarketPriceOfRisk mpr_from_json(const json& config) {
  const auto it = config.find("mpr");
  if (it == config.end()) return {};
  return mpr_from_flat(flat_from_section(*it, "mpr"));
}

SimConfig sim_from_json(const json& config) {
  SimConfig sim;
  const auto it = config.find("sim");
  if (it == config.end()) return sim;
  if (!it->is_object()) throw std::invalid_argument("config: 'sim' must be an object");
  for (const auto& [key, value] : it->items()) {
    if (key == "horizon") {
      sim.horizon = value.get<int>();
    } else if (key == "steps_per_year") {
      sim.steps_per_year = value.get<int>();
    } else if (key == "n_paths") {
      sim.n_paths = value.get<int>();
    } else if (key == "seed") {
      sim.seed = value.get<std::uint64_t>();
    } else if (key == "measure") {
      const std::string m = value.get<std::string>();
      if (m == "P") {
        sim.measure = SimMeasure::p_with_mpr;
      } else if (m == "Q") {
        sim.measure = SimMeasure::q;
      } else {
        throw std::invalid_argument("config: sim.measure must be 'P' or 'Q'");
      }
    } else if (key == "spec") {
      const std::string s = value.get<std::string>();
      if (s == "two_factor") {
        sim.spec = ModelSpec::two_factor;
      } else if (s == "three_factor") {
        sim.spec = ModelSpec::three_factor;
      } else {
        throw std::invalid_argument("config: sim.spec must be 'two_factor' or 'three_factor'");
      }
    } else if (key == "nearby_count") {
      sim.nearby_count = value.get<int>();
    } else {
      throw std::invalid_argument("config: unknown key 'sim." + key + "'");
    }
  }
  return sim;
}

CalibrationConfig calibration_from_json(const json& config) {
  CalibrationConfig cal = CalibrationConfig::defaults();
  const auto it = config.find("calibration");
  if (it == config.end()) return cal;
  if (!it->is_object()) throw std::invalid_argument("config: 'calibration' must be an object");

  auto bound_index = [](const std::string& key) {
    for (int d = 0; d < kCalibrationDim; ++d) {
      if (key == kCalibrationNames[d]) return d;
    }
    throw std::invalid_argument("config: unknown calibration parameter '" + key + "'");
  };

  for (const auto& [key, value] : it->items()) {
    if (key == "lower" || key == "upper") {
      if (!value.is_object()) {
        throw std::invalid_argument("config: calibration." + key + " must be an object");
      }
      for (const auto& [pkey, pval] : value.items()) {
        const int d = bound_index(pkey);
        (key == "lower" ? cal.lower : cal.upper)[d] = pval.get<double>();
      }
    } else if (key == "population") {
      cal.population = value.get<int>();
    } else if (key == "max_generations") {
      cal.max_generations = value.get<int>();
    } else if (key == "ls_generations") {
      cal.ls_generations = value.get<int>();
    } else if (key == "ml_generations") {
      cal.ml_generations = value.get<int>();
    } else if (key == "cr") {
      cal.cr = value.get<double>();
    } else if (key == "f") {
      cal.f = value.get<double>();
    } else if (key == "seed") {
      cal.seed = value.get<std::uint64_t>();
    } else if (key == "tol") {
      cal.tol = value.get<double>();
    } else if (key == "ls_spread_weighted") {
      cal.ls_spread_weighted = value.get<bool>();
    } else if (key == "quotes") {
      // consumed by the CLI when locating the quote CSV; typed-checked here
      // so typos are still rejected
      if (!value.is_string()) {
        throw std::invalid_argument("config: calibration.quotes must be a string");
      }
    } else {
      throw std::invalid_argument("config: unknown key 'calibration." + key + "'");
    }
  }
  return cal;
}

}  // namespace polyfwd::cli
