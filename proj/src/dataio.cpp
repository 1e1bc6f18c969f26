#include "yieldfield/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "yieldfield/error.hpp"

namespace yieldfield {

namespace {

struct RawRow {
  int date;
  std::vector<double> values;
  long line;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view line, bool csv) {
  std::vector<std::string_view> out;
  if (csv) {
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      out.push_back(trim(line.substr(start, pos - start)));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    return out;
  }
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_number(std::string_view token, long line) {
  double v = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec == std::errc::result_out_of_range) {
    // Overflowed values are non-finite; reported by validation.
    return std::strtod(std::string(token).c_str(), nullptr);
  }
  if (ec != std::errc() || ptr != last) {
    throw ParseError("unparseable number '" + std::string(token) + "'", line);
  }
  return v;
}

// YYYYMMDD or YYYYMM (also "YYYY-MM" from our own CSV) -> yyyymm.
int parse_date(std::string_view token, long line) {
  std::string digits;
  for (char c : token) {
    if (c == '-') continue;
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw ParseError("bad date token '" + std::string(token) + "'", line);
    }
    digits.push_back(c);
  }
  int yyyymm = 0;
  if (digits.size() == 8) {
    yyyymm = std::stoi(digits.substr(0, 6));
  } else if (digits.size() == 6) {
    yyyymm = std::stoi(digits);
  } else {
    throw ParseError("bad date token '" + std::string(token) + "'", line);
  }
  const int month = yyyymm % 100;
  if (month < 1 || month > 12) {
    throw ParseError("month out of range in '" + std::string(token) + "'", line);
  }
  return yyyymm;
}

bool starts_with_digit(std::string_view s) {
  return !s.empty() && std::isdigit(static_cast<unsigned char>(s.front()));
}

double parse_maturity_label(std::string_view label, long line) {
  if (!label.empty() && (label.front() == 'm' || label.front() == 'M')) label.remove_prefix(1);
  const double m = parse_number(label, line);
  if (!(m > 0.0)) throw ParseError("nonpositive maturity in header", line);
  return m;
}

YieldPanel assemble(std::vector<RawRow> rows, std::vector<double> maturities) {
  if (rows.empty()) throw ParseError("no data rows", 0);
  for (std::size_t j = 1; j < maturities.size(); ++j) {
    if (!(maturities[j] > maturities[j - 1])) {
      throw ValidationError("maturities must be strictly increasing");
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RawRow& a, const RawRow& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].date == rows[i - 1].date) {
      throw ValidationError("duplicate date " + format_month(rows[i].date) + " (line " +
                            std::to_string(rows[i].line) + ")");
    }
    if (month_ordinal(rows[i].date) != month_ordinal(rows[i - 1].date) + 1) {
      throw ValidationError("gap in monthly dates between " + format_month(rows[i - 1].date) +
                            " and " + format_month(rows[i].date));
    }
  }
  YieldPanel panel;
  panel.maturities = std::move(maturities);
  panel.yields.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(panel.maturities.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    panel.dates.push_back(rows[i].date);
    for (std::size_t j = 0; j < rows[i].values.size(); ++j) {
      const double v = rows[i].values[j];
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite yield at line " + std::to_string(rows[i].line));
      }
      panel.yields(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return panel;
}

YieldPanel parse_whitespace(const std::vector<std::pair<long, std::string_view>>& lines,
                            const std::vector<double>& maturities) {
  std::vector<RawRow> rows;
  for (const auto& [lineno, text] : lines) {
    if (!starts_with_digit(text)) continue;
    const auto tokens = split(text, false);
    if (tokens.size() != maturities.size() + 1) {
      throw ParseError("expected " + std::to_string(maturities.size() + 1) + " columns, found " +
                           std::to_string(tokens.size()),
                       lineno);
    }
    RawRow row{parse_date(tokens[0], lineno), {}, lineno};
    for (std::size_t j = 1; j < tokens.size(); ++j) {
      row.values.push_back(parse_number(tokens[j], lineno));
    }
    rows.push_back(std::move(row));
  }
  return assemble(std::move(rows), maturities);
}

YieldPanel parse_wide_csv(const std::vector<std::pair<long, std::string_view>>& lines) {
  const auto header = split(lines.front().second, true);
  std::vector<double> maturities;
  for (std::size_t j = 1; j < header.size(); ++j) {
    maturities.push_back(parse_maturity_label(header[j], lines.front().first));
  }
  std::vector<RawRow> rows;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto& [lineno, text] = lines[k];
    const auto tokens = split(text, true);
    if (tokens.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " columns, found " +
                           std::to_string(tokens.size()),
                       lineno);
    }
    RawRow row{parse_date(tokens[0], lineno), {}, lineno};
    for (std::size_t j = 1; j < tokens.size(); ++j) {
      row.values.push_back(parse_number(tokens[j], lineno));
    }
    rows.push_back(std::move(row));
  }
  return assemble(std::move(rows), std::move(maturities));
}

YieldPanel parse_long_csv(const std::vector<std::pair<long, std::string_view>>& lines) {
  std::map<int, std::map<double, std::pair<double, long>>> cells;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto& [lineno, text] = lines[k];
    const auto tokens = split(text, true);
    if (tokens.size() != 3) {
      throw ParseError("expected 3 columns, found " + std::to_string(tokens.size()), lineno);
    }
    const int date = parse_date(tokens[0], lineno);
    const double m = parse_maturity_label(tokens[1], lineno);
    auto& slot = cells[date];
    if (slot.count(m)) throw ValidationError("duplicate cell at line " + std::to_string(lineno));
    slot[m] = {parse_number(tokens[2], lineno), lineno};
  }
  if (cells.empty()) throw ParseError("no data rows", 0);
  std::vector<double> maturities;
  for (const auto& [m, v] : cells.begin()->second) maturities.push_back(m);
  std::vector<RawRow> rows;
  for (const auto& [date, row] : cells) {
    RawRow r{date, {}, row.begin()->second.second};
    if (row.size() != maturities.size()) {
      throw ParseError("ragged long-form panel at " + format_month(date), r.line);
    }
    std::size_t j = 0;
    for (const auto& [m, v] : row) {
      if (m != maturities[j++]) {
        throw ParseError("inconsistent maturities at " + format_month(date), v.second);
      }
      r.values.push_back(v.first);
    }
    rows.push_back(std::move(r));
  }
  return assemble(std::move(rows), std::move(maturities));
}

void append_number(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

std::string format_maturity(double m) {
  std::string s;
  append_number(s, m);
  return s;
}

}  // namespace

int parse_month(std::string_view token) { return parse_date(token, 0); }

std::string format_month(int yyyymm) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", yyyymm / 100, yyyymm % 100);
  return buf;
}

const std::vector<double>& standard_maturities() {
  static const std::vector<double> m{3, 6, 9, 12, 15, 18, 21, 24, 30,
                                     36, 48, 60, 72, 84, 96, 108, 120};
  return m;
}

Eigen::Index YieldPanel::index_of(int yyyymm) const {
  if (dates.empty()) throw RangeError("empty panel");
  const long k = month_ordinal(yyyymm) - month_ordinal(dates.front());
  if (k < 0 || k >= static_cast<long>(dates.size())) {
    throw RangeError("month " + format_month(yyyymm) + " outside panel");
  }
  return k;
}

Eigen::Index YieldPanel::maturity_index(double maturity) const {
  for (std::size_t j = 0; j < maturities.size(); ++j) {
    if (std::abs(maturities[j] - maturity) < 1e-9) return static_cast<Eigen::Index>(j);
  }
  throw RangeError("maturity " + format_maturity(maturity) + " not in panel");
}

YieldPanel YieldPanel::rows(Eigen::Index first, Eigen::Index last) const {
  if (first < 0 || last >= months() || first > last) throw RangeError("row slice out of range");
  YieldPanel out;
  out.dates.assign(dates.begin() + first, dates.begin() + last + 1);
  out.maturities = maturities;
  out.yields = yields.middleRows(first, last - first + 1);
  return out;
}

YieldPanel YieldPanel::columns(const std::vector<double>& subset) const {
  YieldPanel out;
  out.dates = dates;
  out.maturities = subset;
  out.yields.resize(months(), static_cast<Eigen::Index>(subset.size()));
  for (std::size_t j = 0; j < subset.size(); ++j) {
    out.yields.col(static_cast<Eigen::Index>(j)) = yields.col(maturity_index(subset[j]));
  }
  return out;
}

void YieldPanel::validate() const {
  if (yields.rows() != static_cast<Eigen::Index>(dates.size()) ||
      yields.cols() != static_cast<Eigen::Index>(maturities.size())) {
    throw ValidationError("panel shape does not match its axes");
  }
  for (std::size_t i = 1; i < dates.size(); ++i) {
    if (month_ordinal(dates[i]) != month_ordinal(dates[i - 1]) + 1) {
      throw ValidationError("dates not consecutive at " + format_month(dates[i]));
    }
  }
  for (std::size_t j = 0; j < maturities.size(); ++j) {
    if (!(maturities[j] > 0.0) || (j > 0 && !(maturities[j] > maturities[j - 1]))) {
      throw ValidationError("maturities must be positive and increasing");
    }
  }
  if (!yields.allFinite()) throw ValidationError("non-finite yield");
}

YieldPanel parse_fama_bliss(std::string_view text, const ParseOptions& options) {
  std::vector<std::pair<long, std::string_view>> lines;
  long lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find('\n', start);
    const auto raw = text.substr(start, pos == std::string_view::npos ? text.npos : pos - start);
    ++lineno;
    const auto t = trim(raw);
    if (!t.empty() && t.front() != '#') lines.emplace_back(lineno, t);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (lines.empty()) throw ParseError("empty input", 0);

  YieldPanel panel;
  const auto first = lines.front().second;
  const bool csv = first.rfind("date,", 0) == 0 || first.rfind("date ,", 0) == 0;
  if (csv) {
    const auto header = split(first, true);
    const bool long_form = header.size() == 3 && header[1] == "maturity" && header[2] == "yield";
    panel = long_form ? parse_long_csv(lines) : parse_wide_csv(lines);
  } else {
    panel = parse_whitespace(lines, options.maturities);
  }

  if (options.restrict_to_standard) {
    panel = panel.columns(standard_maturities());
    panel = panel.rows(panel.index_of(kStandardFirstMonth), panel.index_of(kStandardLastMonth));
  }
  return panel;
}

YieldPanel load_panel(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open data file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_fama_bliss(ss.str(), options);
}

std::string to_wide_csv(const YieldPanel& panel) {
  std::string out = "date";
  for (double m : panel.maturities) out += ",m" + format_maturity(m);
  out += '\n';
  for (Eigen::Index i = 0; i < panel.months(); ++i) {
    out += std::to_string(panel.dates[i]);
    for (Eigen::Index j = 0; j < panel.maturity_count(); ++j) {
      out += ',';
      append_number(out, panel.yields(i, j));
    }
    out += '\n';
  }
  return out;
}

std::string to_long_csv(const YieldPanel& panel) {
  std::string out = "date,maturity,yield\n";
  for (Eigen::Index i = 0; i < panel.months(); ++i) {
    for (Eigen::Index j = 0; j < panel.maturity_count(); ++j) {
      out += std::to_string(panel.dates[i]);
      out += ',' + format_maturity(panel.maturities[j]) + ',';
      append_number(out, panel.yields(i, j));
      out += '\n';
    }
  }
  return out;
}

std::optional<std::string> resolve_data_path(const std::optional<std::string>& explicit_path) {
  if (explicit_path && !explicit_path->empty()) return explicit_path;
  if (const char* env = std::getenv("YIELDFIELD_DATA"); env && *env) return std::string(env);
  return std::nullopt;
}

WindowScheme parse_scheme(const std::string& name) {
  if (name == "expanding") return WindowScheme::expanding;
  if (name == "moving") return WindowScheme::moving;
  throw ValidationError("unknown window scheme '" + name + "' (expanding|moving)");
}

std::string to_string(WindowScheme scheme) {
  return scheme == WindowScheme::expanding ? "expanding" : "moving";
}

std::vector<WindowSpec> rolling_origins(const YieldPanel& panel, int first_origin,
                                        int last_origin, int horizon, WindowScheme scheme) {
  const Eigen::Index T = panel.months();
  const Eigen::Index first = panel.index_of(first_origin);
  const Eigen::Index last = panel.index_of(last_origin);
  if (first > last) throw RangeError("first origin after last origin");
  if (first < kMinimumTrainingMonths) {
    throw RangeError("first origin leaves fewer than 24 training months");
  }
  if (horizon < 1 || last + horizon > T - 1) {
    throw RangeError("horizon " + std::to_string(horizon) + " runs past the panel end");
  }
  std::vector<WindowSpec> out;
  const Eigen::Index length = first + 1;
  for (Eigen::Index origin = first; origin <= last; ++origin) {
    WindowSpec w;
    w.train_end = origin;
    w.train_start = scheme == WindowScheme::expanding ? 0 : origin - length + 1;
    w.horizon = horizon;
    w.scheme = scheme;
    out.push_back(w);
  }
  return out;
}

std::vector<WindowSpec> target_aligned_origins(const YieldPanel& panel, int first_target,
                                               int last_target, int horizon,
                                               WindowScheme scheme) {
  return rolling_origins(panel, add_months(first_target, -horizon),
                         add_months(last_target, -horizon), horizon, scheme);
}

}  // namespace yieldfield
