#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "polyfwd/calibrate.hpp"
#include "polyfwd/model.hpp"
#include "polyfwd/qkf.hpp"
#include "polyfwd/simhedge.hpp"

namespace polyfwd::cli {

using nlohmann::json;

// --- Dates -------------------------------------------------------------------
// Quote dates arrive as ISO-8601 calendar dates and are mapped to year
// fractions with ACT/365.25, anchored at January 1 of the first quote's
// calendar year. Whole-number anniversaries of the anchor then line up with
// the yearly delivery grid to within a fraction of a day.

struct CivilDate {
  int y = 1970;
  int m = 1;
  int d = 1;
};

long days_from_civil(const CivilDate& date);
CivilDate civil_from_days(long days);
CivilDate parse_iso_date(const std::string& text, int line_no);
std::string format_iso_date(const CivilDate& date);

double year_fraction(const CivilDate& date, const CivilDate& anchor);
CivilDate date_from_fraction(double t, const CivilDate& anchor);

// --- CSV ingestion -----------------------------------------------------------

struct IngestResult {
  QuoteSeries series;
  CivilDate anchor;                    // January 1 of the first quote's year
  std::vector<std::string> iso_dates;  // aligned with series.dates
};

// Reads `quote_date,nearby,price,spread` rows, groups by date, sorts, and
// converts dates to year fractions. Malformed rows and duplicate
// (date, nearby) keys raise data_error naming the line.
IngestResult ingest_quotes(const std::filesystem::path& path);

// Inverse mapping for synthetic series: year fractions become calendar dates
// relative to the anchor. Values are written with full round-trip precision.
void emit_quotes_csv(const std::filesystem::path& path, const QuoteSeries& series,
                     const CivilDate& anchor);

// --- Formatting and files ----------------------------------------------------

// Full round-trip decimal formatting (17 significant digits).
std::string format_double(double v);

// Writes via a temporary file in the same directory plus rename.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

// FNV-1a 64-bit hash, used to fingerprint config files in manifests.
std::uint64_t fnv1a64(const std::string& bytes);

// Writes manifest.json next to the outputs: subcommand, config hash, seed,
// library versions, and a timestamp (the only non-reproducible field).
void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const std::string& config_bytes, std::uint64_t seed);

// --- Config ------------------------------------------------------------------

// Parses the JSON config file; parse errors are configuration errors
// (std::invalid_argument).
json load_config(const std::filesystem::path& path);

// Section readers. Each validates types and key names strictly.
TwoFactorParams two_factor_from_json(const json& config);
ThreeFactorParams three_factor_from_json(const json& config);
MarketPriceOfRisk mpr_from_json(const json& config);
SimConfig sim_from_json(const json& config);
CalibrationConfig calibration_from_json(const json& config);

}  // namespace polyfwd::cli
