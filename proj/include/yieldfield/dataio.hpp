#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace yieldfield {

// Calendar months are carried as yyyymm integers; ordinals make month
// arithmetic trivial.
inline int month_ordinal(int yyyymm) { return (yyyymm / 100) * 12 + (yyyymm % 100 - 1); }
inline int month_from_ordinal(int ordinal) { return (ordinal / 12) * 100 + ordinal % 12 + 1; }
inline int add_months(int yyyymm, int months) {
  return month_from_ordinal(month_ordinal(yyyymm) + months);
}
std::string format_month(int yyyymm);  // "1985-01"
// Accepts YYYYMM, YYYYMMDD or YYYY-MM.
int parse_month(std::string_view token);

// T x M grid of zero-coupon yields in percent, one row per consecutive month.
struct YieldPanel {
  std::vector<int> dates;
  std::vector<double> maturities;
  Eigen::MatrixXd yields;

  Eigen::Index months() const { return yields.rows(); }
  Eigen::Index maturity_count() const { return yields.cols(); }

  // Row index of a yyyymm label; throws RangeError when absent.
  Eigen::Index index_of(int yyyymm) const;
  Eigen::Index maturity_index(double maturity) const;

  // Rows [first, last] inclusive.
  YieldPanel rows(Eigen::Index first, Eigen::Index last) const;
  YieldPanel columns(const std::vector<double>& subset) const;

  void validate() const;
};

const std::vector<double>& standard_maturities();
inline constexpr int kStandardFirstMonth = 198501;
inline constexpr int kStandardLastMonth = 200012;

struct ParseOptions {
  // Column maturities for whitespace files (CSV headers carry their own).
  std::vector<double> maturities = standard_maturities();
  // Keep only the 17 maturities and January 1985 - December 2000.
  bool restrict_to_standard = false;
};

// Accepts the whitespace Fama–Bliss layout or the canonical CSV (wide
// "date,m3,..." or long "date,maturity,yield"); the format is detected from
// the first non-blank line.
YieldPanel parse_fama_bliss(std::string_view text, const ParseOptions& options = {});
YieldPanel load_panel(const std::string& path, const ParseOptions& options = {});

std::string to_wide_csv(const YieldPanel& panel);
std::string to_long_csv(const YieldPanel& panel);

// Explicit path first, then the YIELDFIELD_DATA environment variable.
std::optional<std::string> resolve_data_path(const std::optional<std::string>& explicit_path);

enum class WindowScheme { expanding, moving };

WindowScheme parse_scheme(const std::string& name);
std::string to_string(WindowScheme scheme);

// Training window [train_start, train_end] (row indices) and the target row
// train_end + horizon.
struct WindowSpec {
  Eigen::Index train_start = 0;
  Eigen::Index train_end = 0;
  int horizon = 1;
  WindowScheme scheme = WindowScheme::expanding;

  Eigen::Index target() const { return train_end + horizon; }
  Eigen::Index length() const { return train_end - train_start + 1; }
};

inline constexpr int kMinimumTrainingMonths = 24;

// One window per monthly origin in [first_origin, last_origin] (yyyymm).
std::vector<WindowSpec> rolling_origins(const YieldPanel& panel, int first_origin,
                                        int last_origin, int horizon, WindowScheme scheme);

// Origins chosen so that targets run from first_target to last_target for
// every horizon.
std::vector<WindowSpec> target_aligned_origins(const YieldPanel& panel, int first_target,
                                               int last_target, int horizon,
                                               WindowScheme scheme);

}  // namespace yieldfield
