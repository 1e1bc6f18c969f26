#include "yieldfield/scoring.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <map>
#include <ostream>
#include <thread>

#include "yieldfield/seeding.hpp"

namespace yieldfield {

Sampler gaussian_sampler(double mu, double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(mu)) throw DomainError("invalid Gaussian sampler");
  return [mu, sigma](std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    return mu + sigma * z(rng);
  };
}

WeightedMoments weighted_moments(const Sampler& sampler, double y, double threshold, int n_draws,
                                 std::uint64_t seed) {
  if (n_draws < 2) throw DomainError("weighted scores need at least 2 draws");
  if (!std::isfinite(threshold) && threshold > 0) return {};
  std::mt19937_64 rng(seed);
  std::vector<double> v(static_cast<std::size_t>(n_draws));
  for (auto& x : v) x = std::max(sampler(rng), threshold);
  const double yc = std::max(y, threshold);
  WeightedMoments out;
  for (double x : v) out.to_observation += std::abs(x - yc);
  out.to_observation /= n_draws;
  std::sort(v.begin(), v.end());
  // sum_{i<j} (v_(j) - v_(i)) = sum_k v_(k) (2k - n + 1)
  double pairs = 0.0;
  for (int k = 0; k < n_draws; ++k) pairs += v[k] * (2.0 * k - n_draws + 1.0);
  out.spread = 2.0 * pairs / (static_cast<double>(n_draws) * (n_draws - 1));
  return out;
}

double wcrps_mc(const Sampler& sampler, double y, double threshold, int n_draws,
                std::uint64_t seed) {
  const auto m = weighted_moments(sampler, y, threshold, n_draws, seed);
  return m.to_observation - 0.5 * m.spread;
}

std::optional<double> swcrps_mc(const Sampler& sampler, double y, double threshold, int n_draws,
                                std::uint64_t seed) {
  const auto m = weighted_moments(sampler, y, threshold, n_draws, seed);
  if (!(m.spread > 0.0)) return std::nullopt;
  return m.to_observation / m.spread + 0.5 * std::log(m.spread);
}

ScoreTable score_backtest(const BacktestReport& report, const YieldPanel& panel,
                          const ScoringOptions& options) {
  if (report.records.empty()) throw ValidationError("no forecasts to score in model " + report.model);
  std::map<std::pair<int, double>, std::vector<const BacktestRecord*>> cells;
  for (const auto& r : report.records) cells[{r.horizon, r.maturity}].push_back(&r);
  ScoreTable table;
  for (const auto& [key, recs] : cells) {
    ScoreRow row;
    row.model = report.model;
    row.horizon = key.first;
    row.maturity = key.second;
    row.raw.resize(recs.size());
    table.rows.push_back(std::move(row));
  }
  // thresholds up front so a missing origin fails before any work
  std::vector<std::vector<double>> thresholds;
  for (const auto& [key, recs] : cells) {
    const Eigen::Index col = panel.maturity_index(key.second);
    std::vector<double> t;
    for (const auto* r : recs) {
      Eigen::Index row;
      try {
        row = panel.index_of(r->origin);
      } catch (const RangeError&) {
        throw RangeError("no yield at origin " + format_month(r->origin) + " for the threshold");
      }
      t.push_back(options.threshold_factor * panel.yields(row, col));
    }
    thresholds.push_back(std::move(t));
  }
  std::vector<const std::vector<const BacktestRecord*>*> cell_list;
  for (const auto& [key, recs] : cells) cell_list.push_back(&recs);
  auto score_cell = [&](std::size_t c) {
    auto& row = table.rows[c];
    const auto& recs = *cell_list[c];
    for (std::size_t k = 0; k < recs.size(); ++k) {
      const auto& r = *recs[k];
      RawScore s;
      s.origin = r.origin;
      s.crps = crps_gaussian(r.mean, r.sd, r.actual);
      s.scrps = scrps_gaussian(r.mean, r.sd, r.actual);
      const std::uint64_t seed =
          derive_seed(options.seed, {static_cast<std::uint64_t>(r.origin),
                                     static_cast<std::uint64_t>(std::llround(r.maturity * 1000))});
      const auto sampler = gaussian_sampler(r.mean, r.sd);
      const auto m = weighted_moments(sampler, r.actual, thresholds[c][k], options.n_draws, seed);
      s.wcrps = m.to_observation - 0.5 * m.spread;
      if (m.spread > 0.0) s.swcrps = m.to_observation / m.spread + 0.5 * std::log(m.spread);
      row.raw[k] = s;
    }
    double crps = 0, scrps = 0, wcrps = 0, swcrps = 0;
    int defined = 0;
    for (const auto& s : row.raw) {
      crps += s.crps;
      scrps += s.scrps;
      wcrps += s.wcrps;
      if (s.swcrps) {
        swcrps += *s.swcrps;
        ++defined;
      }
    }
    const double n = static_cast<double>(row.raw.size());
    row.count = static_cast<int>(row.raw.size());
    row.crps = crps / n;
    row.scrps = scrps / n;
    row.wcrps = wcrps / n;
    row.n_undefined = row.count - defined;
    row.swcrps = defined > 0 ? swcrps / defined : std::numeric_limits<double>::quiet_NaN();
  };
  const std::size_t n = table.rows.size();
  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(n)));
  if (threads == 1) {
    for (std::size_t c = 0; c < n; ++c) score_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < n; c = next++) score_cell(c);
      });
    for (auto& th : pool) th.join();
  }
  return table;
}

void write_scores_csv(std::ostream& out, const std::vector<ScoreTable>& tables) {
  out << "model,horizon,maturity,crps,scrps,wcrps,swcrps,n_undefined\n";
  for (const auto& t : tables)
    for (const auto& r : t.rows) {
      out << r.model << ',' << r.horizon << ',' << format_double(r.maturity) << ','
          << format_double(r.crps) << ',' << format_double(r.scrps) << ','
          << format_double(r.wcrps) << ',' << (std::isnan(r.swcrps) ? "NA" : format_double(r.swcrps))
          << ',' << r.n_undefined << '\n';
    }
}

}  // namespace yieldfield
