#include "hohsmm/data_features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace hohsmm {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::string s = line;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream iss(s);
  std::vector<std::string> out;
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last && std::isfinite(out);
}

bool parse_int(const std::string& s, int& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos;
}

// Stick-breaking row with each break v = u^2 / (u^2 + (1-u)^2). The uniform
// is clamped away from the endpoints so no entry can reach the degenerate
// mass threshold that self-transition exclusion rejects.
std::vector<double> squared_stick_row(int C, Rng& rng) {
  std::vector<double> row(C, 0.0);
  double remaining = 1.0;
  for (int i = 0; i + 1 < C; ++i) {
    double u = std::clamp(uniform_real(rng, 0.0, 1.0), 1e-3, 1.0 - 1e-3);
    double u2 = u * u;
    double w = (1.0 - u) * (1.0 - u);
    double v = u2 / (u2 + w);
    row[i] = v * remaining;
    remaining *= (1.0 - v);
  }
  row[C - 1] = remaining;
  return row;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (num_states < 2) throw InputError("num_states must be at least 2");
  if (order < 1) throw InputError("order must be at least 1");
  if (num_sequences < 1) throw InputError("num_sequences must be at least 1");
  if (t_min < order + 2 || t_max < t_min)
    throw InputError("sequence length bounds are inconsistent");
  auto n = static_cast<std::size_t>(num_states);
  if (mu.size() != n || sigma.size() != n || xi.size() != n)
    throw InputError("emission and duration parameters must match num_states");
  for (double s : sigma)
    if (!(s > 0.0)) throw InputError("sigma entries must be positive");
  for (double x : xi)
    if (!(x > 0.0)) throw InputError("xi entries must be positive");
}

std::pair<std::vector<Trajectory>, SyntheticGroundTruth> generate_synthetic(
    const SyntheticConfig& config, Rng& rng) {
  config.validate();
  const int C = config.num_states;
  const int q = config.order;

  LagSpec lags;
  lags.k.assign(q, C);
  SyntheticGroundTruth truth;
  truth.tensor = TransitionTensor::uniform(C, lags);
  {
    Rng tensor_rng = config.tensor_seed ? derive_rng(*config.tensor_seed, 0)
                                        : derive_rng(rng(), 0);
    std::size_t rows = truth.tensor.num_rows();
    for (std::size_t r = 0; r < rows; ++r) {
      auto row = squared_stick_row(C, tensor_rng);
      std::copy(row.begin(), row.end(), truth.tensor.lambda_row(r).begin());
    }
    truth.tensor.recompute_bar();
  }
  truth.emissions.mu = config.mu;
  truth.emissions.sigma = config.sigma;
  truth.durations.xi = config.xi;

  std::vector<Trajectory> trajs(config.num_sequences);
  truth.states.resize(config.num_sequences);
  truth.durations_per_seq.resize(config.num_sequences);
  truth.total_lengths.resize(config.num_sequences);
  truth.num_segments.resize(config.num_sequences);

  std::vector<int> tuple(q);
  for (int p = 0; p < config.num_sequences; ++p) {
    const int T = uniform_int(rng, config.t_min, config.t_max);
    std::vector<int>& states = truth.states[p];
    std::vector<int>& durations = truth.durations_per_seq[p];
    std::vector<double> values;
    values.reserve(T);
    int elapsed = 0;
    while (elapsed < T) {
      int next;
      if (states.empty()) {
        next = uniform_int(rng, 0, C - 1);
      } else if (static_cast<int>(states.size()) < q) {
        next = uniform_int(rng, 0, C - 2);
        if (next >= states.back()) ++next;
      } else {
        const int S = static_cast<int>(states.size());
        for (int j = 0; j < q; ++j) tuple[j] = states[S - 1 - j];
        auto row = truth.tensor.lambda_bar_row(truth.tensor.row_index(tuple));
        next = sample_categorical(rng, row);
      }
      long d = positive_poisson(rng, config.xi[next]);
      d = std::min<long>(d, T - elapsed);
      states.push_back(next);
      durations.push_back(static_cast<int>(d));
      for (long i = 0; i < d; ++i)
        values.push_back(config.mu[next] +
                         config.sigma[next] *
                             std::normal_distribution<double>(0.0, 1.0)(rng));
      elapsed += static_cast<int>(d);
    }
    truth.total_lengths[p] = T;
    truth.num_segments[p] = static_cast<int>(states.size());
    trajs[p].unit_id = "sim-" + std::to_string(p + 1);
    trajs[p].values.resize(values.size());
    for (std::size_t t = 0; t < values.size(); ++t)
      trajs[p].values[t] = {values[t]};
    trajs[p].validate();
  }
  return {std::move(trajs), std::move(truth)};
}

std::string SensorTable::column_name(int column) {
  if (column < 0 || column >= kNumColumns)
    throw std::out_of_range("sensor column index out of range");
  if (column < kNumSettings)
    return "setting_" + std::to_string(column + 1);
  return "sensor_" + std::to_string(column - kNumSettings + 1);
}

std::size_t SensorTable::total_rows() const {
  std::size_t n = 0;
  for (const auto& unit : units) n += unit.rows.size();
  return n;
}

SensorTable load_sensor_csv(const std::string& path) {
  auto lines = read_lines(path);
  SensorTable table;
  std::map<std::string, std::size_t> index;
  struct RawRow {
    int cycle;
    std::size_t line_no;
    std::vector<double> values;
  };
  std::vector<std::vector<RawRow>> raw;
  bool seen_data = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    auto fields = split_fields(lines[i]);
    if (static_cast<int>(fields.size()) != 2 + SensorTable::kNumColumns)
      throw InputError("line " + std::to_string(i + 1) + ": expected " +
                       std::to_string(2 + SensorTable::kNumColumns) +
                       " fields, got " + std::to_string(fields.size()));
    int cycle;
    if (!parse_int(fields[1], cycle)) {
      if (!seen_data) continue;  // a leading header row is tolerated
      throw InputError("line " + std::to_string(i + 1) +
                       ": cycle '" + fields[1] + "' is not an integer");
    }
    RawRow row;
    row.cycle = cycle;
    row.line_no = i + 1;
    row.values.resize(SensorTable::kNumColumns);
    for (int c = 0; c < SensorTable::kNumColumns; ++c) {
      if (!parse_double(fields[2 + c], row.values[c]))
        throw InputError("line " + std::to_string(i + 1) + ": field '" +
                         fields[2 + c] + "' is not a finite number");
    }
    seen_data = true;
    auto [it, inserted] = index.try_emplace(fields[0], raw.size());
    if (inserted) {
      raw.emplace_back();
      table.units.push_back({fields[0], {}, {}});
    }
    raw[it->second].push_back(std::move(row));
  }
  if (!seen_data) throw InputError("'" + path + "' holds no data rows");

  for (std::size_t u = 0; u < raw.size(); ++u) {
    auto& rows = raw[u];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawRow& a, const RawRow& b) {
                       return a.cycle < b.cycle;
                     });
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].cycle == rows[r - 1].cycle)
        throw InputError("line " + std::to_string(rows[r].line_no) +
                         ": duplicate cycle " + std::to_string(rows[r].cycle) +
                         " for unit '" + table.units[u].unit_id + "'");
    }
    auto& unit = table.units[u];
    unit.cycles.reserve(rows.size());
    unit.rows.reserve(rows.size());
    for (auto& row : rows) {
      unit.cycles.push_back(row.cycle);
      unit.rows.push_back(std::move(row.values));
    }
  }
  return table;
}

void write_sensor_csv(const SensorTable& table, const std::string& path) {
  std::ostringstream out;
  out << "unit,cycle";
  for (int c = 0; c < SensorTable::kNumColumns; ++c)
    out << ',' << SensorTable::column_name(c);
  out << '\n';
  for (const auto& unit : table.units) {
    for (std::size_t r = 0; r < unit.rows.size(); ++r) {
      out << unit.unit_id << ',' << unit.cycles[r];
      for (double v : unit.rows[r]) out << ',' << fmt(v);
      out << '\n';
    }
  }
  std::ofstream f(path);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << out.str();
}

void PcaRule::validate() const {
  if (retained.empty()) throw InputError("fusion rule retains no columns");
  if (mean.size() != retained.size() || scale.size() != retained.size() ||
      loading.size() != retained.size())
    throw InputError("fusion rule fields disagree in length");
  double norm = 0.0;
  for (double l : loading) norm += l * l;
  if (std::abs(std::sqrt(norm) - 1.0) > 1e-6)
    throw NumericError("fusion loading is not unit norm");
  for (double s : scale)
    if (!(s > 0.0)) throw NumericError("fusion scale entries must be positive");
}

PcaRule fit_pca(const SensorTable& table, std::span<const int> candidate_columns) {
  if (table.units.empty()) throw InputError("sensor table holds no units");
  const std::size_t n = table.total_rows();
  if (n < 2) throw InputError("need at least two rows to fit the fusion rule");

  PcaRule rule;
  for (int col : candidate_columns) {
    if (col < 0 || col >= SensorTable::kNumColumns)
      throw std::out_of_range("candidate column out of range");
    double sum = 0.0, sumsq = 0.0;
    for (const auto& unit : table.units)
      for (const auto& row : unit.rows) {
        sum += row[col];
        sumsq += row[col] * row[col];
      }
    double mean = sum / static_cast<double>(n);
    double var = std::max(0.0, sumsq / static_cast<double>(n) - mean * mean);
    double sd = std::sqrt(var);
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) continue;  // constant
    rule.retained.push_back(col);
    rule.mean.push_back(mean);
    rule.scale.push_back(sd);
  }
  if (rule.retained.empty())
    throw InputError("every candidate column is constant");

  const std::size_t d = rule.retained.size();
  std::vector<double> corr(d * d, 0.0);
  std::vector<double> x(d);
  for (const auto& unit : table.units) {
    for (const auto& row : unit.rows) {
      for (std::size_t i = 0; i < d; ++i)
        x[i] = (row[rule.retained[i]] - rule.mean[i]) / rule.scale[i];
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) corr[i * d + j] += x[i] * x[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      corr[i * d + j] /= static_cast<double>(n);
      corr[j * d + i] = corr[i * d + j];
    }

  // Leading eigenvector by power iteration on the correlation matrix.
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> w(d);
  for (int iter = 0; iter < 1000; ++iter) {
    for (std::size_t i = 0; i < d; ++i) {
      w[i] = 0.0;
      for (std::size_t j = 0; j < d; ++j) w[i] += corr[i * d + j] * v[j];
    }
    double norm = 0.0;
    for (double wi : w) norm += wi * wi;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw NumericError("power iteration collapsed");
    double delta = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      w[i] /= norm;
      delta = std::max(delta, std::abs(w[i] - v[i]));
    }
    v = w;
    if (delta < 1e-13) break;
  }
  double eig = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) eig += v[i] * corr[i * d + j] * v[j];
  rule.loading = v;
  rule.explained_variance = eig / static_cast<double>(d);

  // Orient the score to rise over unit life.
  double drift = 0.0;
  for (const auto& unit : table.units) {
    if (unit.rows.size() < 2) continue;
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      first += rule.loading[i] *
               (unit.rows.front()[rule.retained[i]] - rule.mean[i]) / rule.scale[i];
      last += rule.loading[i] *
              (unit.rows.back()[rule.retained[i]] - rule.mean[i]) / rule.scale[i];
    }
    drift += last - first;
  }
  if (drift < 0.0)
    for (double& l : rule.loading) l = -l;

  rule.validate();
  return rule;
}

PcaRule fit_pca(const SensorTable& table) {
  std::vector<int> candidates(SensorTable::kNumSensors);
  for (int i = 0; i < SensorTable::kNumSensors; ++i)
    candidates[i] = SensorTable::kNumSettings + i;
  return fit_pca(table, candidates);
}

std::vector<Trajectory> fpc_transform(const PcaRule& rule,
                                      const SensorTable& table) {
  rule.validate();
  std::vector<Trajectory> out;
  out.reserve(table.units.size());
  for (const auto& unit : table.units) {
    Trajectory traj;
    traj.unit_id = unit.unit_id;
    traj.values.reserve(unit.rows.size());
    for (const auto& row : unit.rows) {
      double s = 0.0;
      for (std::size_t i = 0; i < rule.retained.size(); ++i)
        s += rule.loading[i] * (row[rule.retained[i]] - rule.mean[i]) /
             rule.scale[i];
      traj.values.push_back({s});
    }
    traj.validate();
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<Trajectory> load_trajectories_csv(const std::string& path) {
  auto lines = read_lines(path);
  std::size_t first = 0;
  while (first < lines.size() && blank(lines[first])) ++first;
  if (first == lines.size())
    throw InputError("'" + path + "' holds no data rows");
  {
    std::string header = lines[first];
    header.erase(std::remove_if(header.begin(), header.end(),
                                [](unsigned char c) { return std::isspace(c); }),
                 header.end());
    if (header != "unit,cycle,value")
      throw InputError("line " + std::to_string(first + 1) +
                       ": expected header 'unit,cycle,value'");
  }

  struct RawRow {
    int cycle;
    std::size_t line_no;
    double value;
  };
  std::map<std::string, std::size_t> index;
  std::vector<std::string> order;
  std::vector<std::vector<RawRow>> raw;
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    auto fields = split_fields(lines[i]);
    if (fields.size() != 3)
      throw InputError("line " + std::to_string(i + 1) +
                       ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    RawRow row;
    row.line_no = i + 1;
    if (!parse_int(fields[1], row.cycle))
      throw InputError("line " + std::to_string(i + 1) + ": cycle '" +
                       fields[1] + "' is not an integer");
    if (!parse_double(fields[2], row.value))
      throw InputError("line " + std::to_string(i + 1) + ": value '" +
                       fields[2] + "' is not a finite number");
    auto [it, inserted] = index.try_emplace(fields[0], raw.size());
    if (inserted) {
      raw.emplace_back();
      order.push_back(fields[0]);
    }
    raw[it->second].push_back(row);
  }
  if (raw.empty()) throw InputError("'" + path + "' holds no data rows");

  std::vector<Trajectory> out(raw.size());
  for (std::size_t u = 0; u < raw.size(); ++u) {
    auto& rows = raw[u];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawRow& a, const RawRow& b) {
                       return a.cycle < b.cycle;
                     });
    for (std::size_t r = 1; r < rows.size(); ++r)
      if (rows[r].cycle == rows[r - 1].cycle)
        throw InputError("line " + std::to_string(rows[r].line_no) +
                         ": duplicate cycle " + std::to_string(rows[r].cycle) +
                         " for unit '" + order[u] + "'");
    out[u].unit_id = order[u];
    out[u].values.reserve(rows.size());
    for (const auto& row : rows) out[u].values.push_back({row.value});
    out[u].validate();
  }
  return out;
}

void write_trajectories_csv(std::span<const Trajectory> trajectories,
                            const std::string& path) {
  std::ostringstream out;
  out << "unit,cycle,value\n";
  for (const auto& traj : trajectories) {
    for (int t = 0; t < traj.length(); ++t)
      out << traj.unit_id << ',' << (t + 1) << ',' << fmt(traj.scalar(t))
          << '\n';
  }
  std::ofstream f(path);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << out.str();
}

}  // namespace hohsmm
