#pragma once

// CSV ingestion and emission for the panel schema
//   country,period,value,quantity,fx_rate,stri
// with quantity and stri optional columns. Periods are ordinal integers;
// calendar periods "YYYY-MM" map to YYYY*12 + (MM-1) at ingestion.

#include <charconv>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "armington/errors.hpp"
#include "armington/panel.hpp"

namespace armington {

struct CsvSchema {
  std::string country = "country";
  std::string period = "period";
  std::string value = "value";
  std::string quantity = "quantity";
  std::string fx_rate = "fx_rate";
  std::string stri = "stri";
};

struct LoadOptions {
  bool strict = true;  // reject invalid rows instead of dropping them
  CsvSchema schema;
};

struct LoadResult {
  Panel panel;
  long dropped_rows = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return out;
}

// Ordinal integer, or calendar "YYYY-MM".
inline std::optional<long> parse_period(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  const auto dash = t.find('-', 1);  // keep a leading sign out of it
  if (dash != std::string::npos) {
    long year = 0, month = 0;
    auto r1 = std::from_chars(t.data(), t.data() + dash, year);
    auto r2 = std::from_chars(t.data() + dash + 1, t.data() + t.size(), month);
    if (r1.ec != std::errc() || r2.ec != std::errc() || r1.ptr != t.data() + dash ||
        r2.ptr != t.data() + t.size() || month < 1 || month > 12)
      return std::nullopt;
    return year * 12 + (month - 1);
  }
  long out = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return out;
}

}  // namespace detail

inline LoadResult load_panel(std::istream& in, const LoadOptions& options = {}) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input: missing header");

  const auto header = detail::split_csv_line(line);
  long col_country = -1, col_period = -1, col_value = -1, col_quantity = -1, col_fx = -1,
       col_stri = -1;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string name = detail::trim(header[j]);
    if (name == options.schema.country) col_country = static_cast<long>(j);
    else if (name == options.schema.period) col_period = static_cast<long>(j);
    else if (name == options.schema.value) col_value = static_cast<long>(j);
    else if (name == options.schema.quantity) col_quantity = static_cast<long>(j);
    else if (name == options.schema.fx_rate) col_fx = static_cast<long>(j);
    else if (name == options.schema.stri) col_stri = static_cast<long>(j);
  }
  if (col_country < 0 || col_period < 0 || col_value < 0 || col_fx < 0)
    throw ParseError("header must contain columns " + options.schema.country + ", " +
                     options.schema.period + ", " + options.schema.value + ", " +
                     options.schema.fx_rate);

  LoadResult result{Panel{}, 0, {}};
  std::vector<PanelObservation> observations;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    const auto field = [&](long j) -> std::string {
      return j >= 0 && j < static_cast<long>(fields.size()) ? fields[j] : std::string{};
    };

    const auto reject = [&](const std::string& why) {
      if (options.strict) throw ParseError(why, line_no);
      ++result.dropped_rows;
    };

    PanelObservation obs;
    obs.country = detail::trim(field(col_country));
    if (obs.country.empty()) { reject("missing country"); continue; }

    const auto period = detail::parse_period(field(col_period));
    if (!period) { reject("unparsable period '" + field(col_period) + "'"); continue; }
    obs.period = *period;

    const auto value = detail::parse_double(field(col_value));
    if (!value) { reject("unparsable value '" + field(col_value) + "'"); continue; }
    if (!(*value > 0.0)) { reject("non-positive value " + field(col_value)); continue; }
    obs.value = *value;

    const auto fx = detail::parse_double(field(col_fx));
    if (!fx) { reject("unparsable fx_rate '" + field(col_fx) + "'"); continue; }
    if (!(*fx > 0.0)) { reject("non-positive fx_rate " + field(col_fx)); continue; }
    obs.fx_rate = *fx;

    if (col_quantity >= 0) {
      const std::string raw = detail::trim(field(col_quantity));
      if (!raw.empty()) {
        const auto q = detail::parse_double(raw);
        if (!q) { reject("unparsable quantity '" + raw + "'"); continue; }
        if (!(*q > 0.0)) { reject("non-positive quantity " + raw); continue; }
        obs.quantity = *q;
      }
    }
    if (col_stri >= 0) {
      const std::string raw = detail::trim(field(col_stri));
      if (!raw.empty()) {
        const auto r = detail::parse_double(raw);
        if (!r) { reject("unparsable stri '" + raw + "'"); continue; }
        obs.stri = *r;  // out-of-domain stri is masked (and counted) by the panel builder
      }
    }
    observations.push_back(std::move(obs));
  }

  result.panel = Panel::from_observations(observations);
  if (result.dropped_rows > 0)
    result.warnings.push_back("dropped " + std::to_string(result.dropped_rows) + " invalid rows");
  if (result.panel.dropped_stri() > 0)
    result.warnings.push_back("masked " + std::to_string(result.panel.dropped_stri()) +
                              " stri cells outside (0, 1]");
  return result;
}

namespace detail {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

// Emits the ingestion schema; quantity and stri columns are included only
// when the panel carries them, so output always round-trips through load_panel.
inline void write_panel_csv(std::ostream& out, const Panel& panel) {
  const bool with_quantity = panel.has_full_quantity();
  const bool with_stri = panel.has_stri();
  out << "country,period,value";
  if (with_quantity) out << ",quantity";
  out << ",fx_rate";
  if (with_stri) out << ",stri";
  out << "\n";
  for (Eigen::Index i = 0; i < panel.n_countries(); ++i) {
    for (Eigen::Index t = 0; t < panel.n_periods(); ++t) {
      if (!panel.mask()(i, t)) continue;
      out << panel.countries()[i] << ',' << panel.periods()[t] << ','
          << detail::format_double(panel.values()(i, t));
      if (with_quantity) out << ',' << detail::format_double(panel.quantities()(i, t));
      out << ',' << detail::format_double(panel.fx_rates()(i, t));
      if (with_stri) {
        out << ',';
        if (!std::isnan(panel.stri()(i, t))) out << detail::format_double(panel.stri()(i, t));
      }
      out << "\n";
    }
  }
}

}  // namespace armington
