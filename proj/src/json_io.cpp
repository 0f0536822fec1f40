#include "hohsmm/json_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using nlohmann::json;

namespace hohsmm {

namespace {

json states_up(const std::vector<int>& states) {
  json out = json::array();
  for (int s : states) out.push_back(s + 1);
  return out;
}

std::vector<int> states_down(const json& j, int limit, const char* what) {
  std::vector<int> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    int s = v.get<int>();
    if (s < 1 || s > limit)
      throw InputError(std::string(what) + " index " + std::to_string(s) +
                       " outside 1.." + std::to_string(limit));
    out.push_back(s - 1);
  }
  return out;
}

json tensor_to_json(const TransitionTensor& tensor) {
  json rows = json::array();
  for (std::size_t r = 0; r < tensor.num_rows(); ++r) {
    auto row = tensor.lambda_bar_row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return json{{"lambda_bar", std::move(rows)}, {"lambda0", tensor.lambda0}};
}

TransitionTensor tensor_from_json(const json& j, int C, const LagSpec& lags) {
  TransitionTensor tensor = TransitionTensor::uniform(C, lags);
  const auto& rows = j.at("lambda_bar");
  if (rows.size() != tensor.num_rows())
    throw InputError("lambda_bar holds " + std::to_string(rows.size()) +
                     " rows, expected " + std::to_string(tensor.num_rows()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto row = rows[r].get<std::vector<double>>();
    if (static_cast<int>(row.size()) != C)
      throw InputError("lambda_bar row width differs from num_states");
    std::copy(row.begin(), row.end(), tensor.lambda_row(r).begin());
  }
  tensor.lambda0 = j.at("lambda0").get<std::vector<double>>();
  if (static_cast<int>(tensor.lambda0.size()) != C)
    throw InputError("lambda0 length differs from num_states");
  // Stored rows already exclude self-transitions; adopting them verbatim as
  // both the working and the excluded rows keeps round trips exact. A row
  // smuggling real diagonal mass fails the simplex check below.
  for (std::size_t r = 0; r < tensor.num_rows(); ++r)
    tensor.lambda[r * C + tensor.excluded_state(r)] = 0.0;
  tensor.lambda_bar = tensor.lambda;
  tensor.validate();
  return tensor;
}

json pi_to_json(const AllocationDistributions& pi) { return json(pi.pi); }

AllocationDistributions pi_from_json(const json& j, int C, const LagSpec& lags) {
  AllocationDistributions pi;
  pi.pi = j.get<std::vector<std::vector<std::vector<double>>>>();
  pi.validate(C, lags);
  return pi;
}

json z_up(const std::vector<std::vector<std::vector<int>>>& z) {
  // Missing entries (-1, before a full history exists) are stored as 0.
  json seqs = json::array();
  for (const auto& seq : z) {
    json lags = json::array();
    for (const auto& lag : seq) {
      json vals = json::array();
      for (int h : lag) vals.push_back(h + 1);
      lags.push_back(std::move(vals));
    }
    seqs.push_back(std::move(lags));
  }
  return seqs;
}

std::vector<std::vector<std::vector<int>>> z_down(const json& j) {
  std::vector<std::vector<std::vector<int>>> z;
  z.reserve(j.size());
  for (const auto& seq : j) {
    std::vector<std::vector<int>> lags;
    lags.reserve(seq.size());
    for (const auto& lag : seq) {
      std::vector<int> vals;
      vals.reserve(lag.size());
      for (const auto& v : lag) vals.push_back(v.get<int>() - 1);
      lags.push_back(std::move(vals));
    }
    z.push_back(std::move(lags));
  }
  return z;
}

json segmentation_to_json(const LabeledSegmentation& seg) {
  json bounds = json::array();
  for (int b : seg.boundaries) bounds.push_back(b + 1);
  return json{{"boundaries", std::move(bounds)},
              {"durations", seg.durations},
              {"states", states_up(seg.states)}};
}

}  // namespace

json model_to_json(const HohsmmModel& model) {
  json j;
  j["spec"] = {{"num_states", model.spec.num_states},
               {"max_order", model.spec.max_order},
               {"emission_family", "normal"},
               {"duration_family", "poisson"},
               {"random_seed", model.spec.random_seed}};
  j["lags"] = {{"k", model.lags.k}};
  j["transitions"] = tensor_to_json(model.transitions);
  j["allocations"] = {{"pi", pi_to_json(model.allocations)}};
  j["emissions"] = {{"mu", model.emissions.mu},
                    {"sigma", model.emissions.sigma}};
  j["durations"] = {{"xi", model.durations.xi}};
  j["alpha_star"] = model.alpha_star;
  j["cluster_rule"] = model.cluster_rule;
  if (model.failure_state)
    j["failure_state"] = *model.failure_state + 1;
  else
    j["failure_state"] = nullptr;
  j["jump_support"] = {{"alpha_min", model.jump_support.alpha_min},
                       {"alpha_max", model.jump_support.alpha_max}};
  return j;
}

HohsmmModel model_from_json(const json& j) {
  try {
    HohsmmModel model;
    const auto& spec = j.at("spec");
    model.spec.num_states = spec.at("num_states").get<int>();
    model.spec.max_order = spec.at("max_order").get<int>();
    std::string ef = spec.at("emission_family").get<std::string>();
    if (ef != "normal")
      throw InputError("unsupported emission family '" + ef + "'");
    std::string df = spec.at("duration_family").get<std::string>();
    if (df != "poisson")
      throw InputError("unsupported duration family '" + df + "'");
    model.spec.random_seed = spec.at("random_seed").get<std::uint64_t>();
    model.spec.validate();

    model.lags.k = j.at("lags").at("k").get<std::vector<int>>();
    model.lags.validate(model.spec.num_states);
    if (model.lags.order() != model.spec.max_order)
      throw InputError("lag count differs from max_order");

    model.transitions =
        tensor_from_json(j.at("transitions"), model.spec.num_states, model.lags);
    model.allocations = pi_from_json(j.at("allocations").at("pi"),
                                     model.spec.num_states, model.lags);
    model.emissions.mu = j.at("emissions").at("mu").get<std::vector<double>>();
    model.emissions.sigma =
        j.at("emissions").at("sigma").get<std::vector<double>>();
    model.durations.xi = j.at("durations").at("xi").get<std::vector<double>>();
    model.alpha_star = j.at("alpha_star").get<double>();
    model.cluster_rule =
        j.at("cluster_rule").get<std::vector<std::vector<double>>>();
    if (j.contains("failure_state") && !j.at("failure_state").is_null()) {
      int fs = j.at("failure_state").get<int>();
      if (fs < 1 || fs > model.spec.num_states)
        throw InputError("failure_state outside 1.." +
                         std::to_string(model.spec.num_states));
      model.failure_state = fs - 1;
    }
    const auto& support = j.at("jump_support");
    model.jump_support.alpha_min = support.at("alpha_min").get<double>();
    model.jump_support.alpha_max = support.at("alpha_max").get<double>();
    model.validate();
    return model;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model JSON: ") + e.what());
  }
}

void save_model(const HohsmmModel& model, const std::string& path) {
  save_json_file(model_to_json(model), path);
}

HohsmmModel load_model(const std::string& path) {
  return model_from_json(load_json_file(path));
}

json draw_to_json(const Draw& draw) {
  json j;
  j["k"] = draw.tensor.k;
  j["transitions"] = tensor_to_json(draw.tensor);
  j["pi"] = pi_to_json(draw.pi);
  j["mu"] = draw.theta.mu;
  j["sigma"] = draw.theta.sigma;
  json c = json::array();
  for (const auto& seq : draw.c) c.push_back(states_up(seq));
  j["c"] = std::move(c);
  j["z"] = z_up(draw.z);
  j["loglik"] = draw.loglik;
  return j;
}

Draw draw_from_json(const json& j) {
  try {
    Draw draw;
    LagSpec lags;
    lags.k = j.at("k").get<std::vector<int>>();
    const int C = lags.k.at(0);
    lags.validate(C);
    draw.tensor = tensor_from_json(j.at("transitions"), C, lags);
    draw.pi = pi_from_json(j.at("pi"), C, lags);
    draw.theta.mu = j.at("mu").get<std::vector<double>>();
    draw.theta.sigma = j.at("sigma").get<std::vector<double>>();
    draw.theta.validate();
    for (const auto& seq : j.at("c"))
      draw.c.push_back(states_down(seq, C, "state"));
    draw.z = z_down(j.at("z"));
    draw.loglik = j.at("loglik").get<double>();
    return draw;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed draw JSON: ") + e.what());
  }
}

void save_trace(const PosteriorDraws& draws, const std::string& path) {
  std::ostringstream out;
  for (const Draw& d : draws.draws) {
    json line = draw_to_json(d);
    line["alpha"] = draws.alpha_star;
    out << line.dump() << '\n';
  }
  atomic_write_file(path, out.str());
}

PosteriorDraws load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  PosteriorDraws draws;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError("'" + path + "' line " + std::to_string(line_no) +
                       ": " + e.what());
    }
    draws.draws.push_back(draw_from_json(j));
    if (draws.draws.size() == 1) {
      draws.k.k = draws.draws.front().tensor.k;
      if (j.contains("alpha")) draws.alpha_star = j.at("alpha").get<double>();
    }
  }
  if (draws.draws.empty())
    throw InputError("'" + path + "' holds no draws");
  return draws;
}

json decode_result_to_json(const DecodeResult& result) {
  json bounds = json::array();
  for (int b : result.segmentation.boundaries) bounds.push_back(b + 1);
  json samples = json::array();
  for (const auto& seg : result.state_samples) samples.push_back(states_up(seg));
  return json{{"alpha_star_local", result.alpha_star_local},
              {"boundaries", std::move(bounds)},
              {"durations", result.segmentation.durations},
              {"decoded", states_up(result.decoded)},
              {"adjacent_equal_decoded", result.adjacent_equal_decoded},
              {"state_samples", std::move(samples)}};
}

json rul_estimate_to_json(const RulEstimate& estimate) {
  return json{{"mean_rul", estimate.mean_rul},
              {"num_paths", estimate.num_paths},
              {"num_censored", estimate.num_censored},
              {"per_path_ruls", estimate.per_path_ruls},
              {"path_lengths", estimate.path_lengths}};
}

json ground_truth_to_json(const SyntheticConfig& config,
                          const SyntheticGroundTruth& truth) {
  json j;
  j["config"] = {{"num_states", config.num_states},
                 {"order", config.order},
                 {"num_sequences", config.num_sequences},
                 {"t_min", config.t_min},
                 {"t_max", config.t_max},
                 {"mu", config.mu},
                 {"sigma", config.sigma},
                 {"xi", config.xi}};
  j["transitions"] = tensor_to_json(truth.tensor);
  json states = json::array();
  for (const auto& seq : truth.states) states.push_back(states_up(seq));
  j["states"] = std::move(states);
  j["durations_per_seq"] = truth.durations_per_seq;
  j["total_lengths"] = truth.total_lengths;
  j["num_segments"] = truth.num_segments;
  return j;
}

json pca_rule_to_json(const PcaRule& rule) {
  json retained = json::array();
  for (int col : rule.retained) retained.push_back(col + 1);
  return json{{"retained", std::move(retained)},
              {"mean", rule.mean},
              {"scale", rule.scale},
              {"loading", rule.loading},
              {"explained_variance", rule.explained_variance}};
}

PcaRule pca_rule_from_json(const json& j) {
  try {
    PcaRule rule;
    for (const auto& v : j.at("retained")) {
      int col = v.get<int>();
      if (col < 1 || col > SensorTable::kNumColumns)
        throw InputError("retained column " + std::to_string(col) +
                         " outside 1.." +
                         std::to_string(SensorTable::kNumColumns));
      rule.retained.push_back(col - 1);
    }
    rule.mean = j.at("mean").get<std::vector<double>>();
    rule.scale = j.at("scale").get<std::vector<double>>();
    rule.loading = j.at("loading").get<std::vector<double>>();
    rule.explained_variance = j.at("explained_variance").get<double>();
    rule.validate();
    return rule;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed fusion rule JSON: ") + e.what());
  }
}

json fit_report_to_json(const PosteriorDraws& draws, const HohsmmModel& model) {
  json j;
  j["alpha_star"] = draws.alpha_star;
  j["jump_support"] = {{"alpha_min", draws.support.alpha_min},
                       {"alpha_max", draws.support.alpha_max}};
  json lag_list = json::array();
  for (int lag = 1; lag <= model.lags.order(); ++lag)
    lag_list.push_back({{"lag", lag},
                        {"k", draws.k.k[lag - 1]},
                        {"important", draws.k.k[lag - 1] > 1},
                        {"inclusion", draws.inclusion[lag - 1]}});
  j["lags"] = std::move(lag_list);
  j["alpha_chain"] = draws.alpha_chain;
  json accepted = json::array();
  for (std::uint8_t a : draws.alpha_accepted)
    accepted.push_back(a != 0);
  j["alpha_accepted"] = std::move(accepted);
  j["outer_loglik"] = draws.outer_loglik;
  j["num_draws"] = draws.draws.size();
  json segs = json::array();
  for (const auto& seg : draws.final_segmentations)
    segs.push_back(segmentation_to_json(seg));
  j["final_segmentations"] = std::move(segs);
  json decoded = json::array();
  for (const auto& seq : draws.decoded_train) decoded.push_back(states_up(seq));
  j["decoded_train"] = std::move(decoded);
  j["emissions"] = {{"mu", model.emissions.mu},
                    {"sigma", model.emissions.sigma}};
  j["durations"] = {{"xi", model.durations.xi}};
  if (model.failure_state)
    j["failure_state"] = *model.failure_state + 1;
  return j;
}

void atomic_write_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path dir = target.parent_path();
  if (dir.empty()) dir = ".";
  fs::path tmp = dir / (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw InputError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec)
    throw InputError("cannot rename '" + tmp.string() + "' to '" + path +
                     "': " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

json load_json_file(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError("'" + path + "': " + e.what());
  }
}

void save_json_file(const json& j, const std::string& path) {
  atomic_write_file(path, j.dump(2) + "\n");
}

}  // namespace hohsmm
