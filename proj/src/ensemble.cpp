#include "macrocast/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "macrocast/error.hpp"
#include "macrocast/roster.hpp"

namespace macrocast {

void EnsembleSpec::validate() const {
  if (id.empty()) throw ConfigError("ensemble id must not be empty");
  if (members.size() < 2) throw ConfigError("ensemble '" + id + "' needs at least 2 members");
  std::set<std::string> seen(members.begin(), members.end());
  if (seen.size() != members.size()) throw ConfigError("ensemble '" + id + "' lists a member twice");
  if (kind == Kind::Reciprocal || kind == Kind::Exponential) {
    if (window < 1) throw ConfigError("ensemble '" + id + "': window must be >= 1");
  }
  if (kind == Kind::Exponential && !(beta > 0)) throw ConfigError("ensemble '" + id + "': beta must be > 0");
}

std::optional<EnsembleSpec> parse_ensemble_name(const std::string& name) {
  EnsembleSpec s;
  s.id = name;
  const auto g2 = group_members(ModelGroup::G2);
  const auto g3 = group_members(ModelGroup::G3);
  std::vector<std::string> g23 = g2;
  g23.insert(g23.end(), g3.begin(), g3.end());

  for (const auto& [prefix, kind] : {std::pair{std::string("Median "), EnsembleSpec::Kind::Median},
                                     std::pair{std::string("Mean "), EnsembleSpec::Kind::Mean}}) {
    if (name.rfind(prefix, 0) != 0) continue;
    const std::string rest = name.substr(prefix.size());
    s.kind = kind;
    if (rest == "ML Models") s.members = g2;
    else if (rest == "CC Models") s.members = g3;
    else if (rest == "All Models") s.members = g23;
    else return std::nullopt;
    return s;
  }

  auto parse_int = [](const std::string& t) -> std::optional<int> {
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    return std::stoi(t);
  };
  if (name.rfind("RECIP", 0) == 0) {
    const auto m = parse_int(name.substr(5));
    if (!m) return std::nullopt;
    s.kind = EnsembleSpec::Kind::Reciprocal;
    s.window = *m;
    s.members = g23;
    return s;
  }
  if (name.rfind("EXP", 0) == 0) {
    const auto us = name.find('_');
    if (us == std::string::npos) return std::nullopt;
    const std::string b = name.substr(3, us - 3);
    const auto m = parse_int(name.substr(us + 1));
    if (!m || b.empty()) return std::nullopt;
    std::size_t used = 0;
    double beta = 0.0;
    try {
      beta = std::stod(b, &used);
    } catch (const std::exception&) {
      return std::nullopt;
    }
    if (used != b.size()) return std::nullopt;
    s.kind = EnsembleSpec::Kind::Exponential;
    s.beta = beta;
    s.window = *m;
    s.members = g23;
    return s;
  }
  return std::nullopt;
}

double combine_values(std::vector<double> v, EnsembleSpec::Kind kind) {
  if (v.empty()) throw DataError("cannot combine zero forecasts");
  if (kind == EnsembleSpec::Kind::Median) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

namespace {

struct QuarterKey {
  int horizon;
  QuarterDate target;
  auto operator<=>(const QuarterKey&) const = default;
};

// Member forecasts per (horizon, target) in member order. Every quarter
// present for any member must be present for all of them.
std::map<QuarterKey, std::vector<const ForecastRecord*>> align(const std::vector<ForecastRecord>& records,
                                                              const EnsembleSpec& spec) {
  std::map<std::string, std::size_t> slot;
  for (std::size_t j = 0; j < spec.members.size(); ++j) slot[spec.members[j]] = j;
  std::map<QuarterKey, std::vector<const ForecastRecord*>> out;
  std::set<std::string> seen;
  for (const auto& r : records) {
    auto it = slot.find(r.model_id);
    if (it == slot.end()) continue;
    seen.insert(r.model_id);
    auto& row = out[{r.horizon, r.target_date}];
    row.resize(spec.members.size(), nullptr);
    if (row[it->second]) {
      throw DataError("ensemble '" + spec.id + "': duplicate forecast from '" + r.model_id + "' for " +
                      r.target_date.to_string());
    }
    row[it->second] = &r;
  }
  for (const auto& m : spec.members) {
    if (!seen.count(m)) throw DataError("ensemble '" + spec.id + "': member '" + m + "' has no forecasts");
  }
  for (const auto& [key, row] : out) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!row[j]) {
        throw DataError("ensemble '" + spec.id + "': member '" + spec.members[j] + "' has no forecast for " +
                        key.target.to_string());
      }
    }
  }
  return out;
}

ForecastRecord make_record(const EnsembleSpec& spec, const QuarterKey& key, double prediction,
                           const std::vector<const ForecastRecord*>& row) {
  ForecastRecord r;
  r.model_id = spec.id;
  r.horizon = key.horizon;
  r.target_date = key.target;
  r.origin = key.target.plus(-key.horizon);
  r.prediction = prediction;
  for (const auto* m : row) {
    if (m->actual) {
      r.actual = m->actual;
      break;
    }
  }
  return r;
}

void normalize(std::vector<double>& w) {
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= s;
}

}  // namespace

std::vector<ForecastRecord> combine_static(const std::vector<ForecastRecord>& records, const EnsembleSpec& spec) {
  spec.validate();
  if (spec.kind != EnsembleSpec::Kind::Mean && spec.kind != EnsembleSpec::Kind::Median) {
    throw ConfigError("combine_static needs a mean or median ensemble");
  }
  std::vector<ForecastRecord> out;
  for (const auto& [key, row] : align(records, spec)) {
    std::vector<double> v;
    v.reserve(row.size());
    for (const auto* r : row) v.push_back(r->prediction);
    out.push_back(make_record(spec, key, combine_values(std::move(v), spec.kind), row));
  }
  sort_records(out);
  return out;
}

std::vector<double> weights_reciprocal(std::span<const double> loss_sums, double eps) {
  std::vector<double> w;
  w.reserve(loss_sums.size());
  for (double l : loss_sums) {
    if (l < 0 || std::isnan(l)) throw DataError("loss sums must be nonnegative");
    w.push_back(1.0 / std::max(l, eps));
  }
  normalize(w);
  return w;
}

std::vector<double> weights_exponential(std::span<const double> loss_sums, double beta) {
  if (!(beta > 0)) throw ConfigError("beta must be > 0");
  if (loss_sums.empty()) return {};
  const double lo = *std::min_element(loss_sums.begin(), loss_sums.end());
  std::vector<double> w;
  w.reserve(loss_sums.size());
  for (double l : loss_sums) w.push_back(std::exp(-beta * (l - lo)));
  normalize(w);
  return w;
}

WeightedResult weighted_forecast(const std::vector<ForecastRecord>& records, const EnsembleSpec& spec) {
  spec.validate();
  if (spec.kind != EnsembleSpec::Kind::Reciprocal && spec.kind != EnsembleSpec::Kind::Exponential) {
    throw ConfigError("weighted_forecast needs a reciprocal or exponential ensemble");
  }
  const auto rows = align(records, spec);
  const std::size_t k = spec.members.size();
  WeightedResult out;

  // Realized member losses per (horizon, target) where an actual exists.
  std::map<QuarterKey, std::vector<double>> realized;
  for (const auto& [key, row] : rows) {
    if (!row.front()->actual) continue;
    std::vector<double> l(k);
    for (std::size_t j = 0; j < k; ++j) l[j] = spec.loss(*row[j]->actual - row[j]->prediction);
    realized.emplace(key, std::move(l));
  }

  for (const auto& [key, row] : rows) {
    const QuarterDate origin = key.target.plus(-key.horizon);
    std::vector<double> sums(k, 0.0);
    int used = 0;
    auto it = realized.upper_bound({key.horizon, origin});
    while (used < spec.window && it != realized.begin()) {
      --it;
      if (it->first.horizon != key.horizon) break;
      for (std::size_t j = 0; j < k; ++j) sums[j] += it->second[j];
      ++used;
    }
    std::vector<double> w;
    if (used == 0) {
      w.assign(k, 1.0 / static_cast<double>(k));
      out.log.add("info", "ensemble", spec.id, key.target.to_string(), "no realized losses yet; uniform weights");
    } else if (spec.kind == EnsembleSpec::Kind::Reciprocal) {
      w = weights_reciprocal(sums);
    } else {
      w = weights_exponential(sums, spec.beta);
    }
    double pred = 0.0;
    for (std::size_t j = 0; j < k; ++j) pred += w[j] * row[j]->prediction;
    out.records.push_back(make_record(spec, key, pred, row));
    out.weights.push_back({key.target, used, std::move(w)});
  }
  sort_records(out.records);
  return out;
}

WeightedResult run_ensemble(const std::vector<ForecastRecord>& records, const EnsembleSpec& spec) {
  if (spec.kind == EnsembleSpec::Kind::Mean || spec.kind == EnsembleSpec::Kind::Median) {
    WeightedResult r;
    r.records = combine_static(records, spec);
    return r;
  }
  return weighted_forecast(records, spec);
}

}  // namespace macrocast
