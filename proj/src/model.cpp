#include "danet/model.hpp"

#include <cmath>
#include <random>

#include "json.hpp"

namespace danet {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string combine_rule_name(CombineRule rule) {
  switch (rule) {
    case CombineRule::Concat: return "concat";
    case CombineRule::Additive: return "additive";
    case CombineRule::Average: return "average";
    case CombineRule::None: return "none";
  }
  throw ContractError("combine_rule_name: bad rule");
}

CombineRule combine_rule_from_name(const std::string& name) {
  if (name == "concat") return CombineRule::Concat;
  if (name == "additive") return CombineRule::Additive;
  if (name == "average") return CombineRule::Average;
  if (name == "none") return CombineRule::None;
  throw ContractError("unknown combine rule: " + name);
}

Graph::NodeId combine(Graph& g, CombineRule rule, const std::vector<Graph::NodeId>& history,
                      Graph::NodeId fresh) {
  if (rule == CombineRule::None) return fresh;
  if (history.empty()) throw ContractError("combine: history must be non-empty");
  if (rule == CombineRule::Concat) {
    std::vector<Graph::NodeId> parts = history;
    parts.push_back(fresh);
    return g.concat_last(parts);
  }
  Graph::NodeId acc = fresh;
  for (Graph::NodeId h : history) acc = g.add(acc, h);
  if (rule == CombineRule::Average)
    acc = g.scale(acc, 1.0 / static_cast<double>(history.size() + 1));
  return acc;
}

std::string ModelSpec::to_document() const {
  nlohmann::json j;
  j["combine_rule"] = combine_rule_name(combine_rule);
  j["block_count"] = block_count;
  j["width"] = width;
  j["se_ratio"] = se_ratio;
  j["kernel_heights"] = kernel_heights;
  j["seed"] = seed;
  return j.dump(2);
}

ModelSpec ModelSpec::from_document(const std::string& doc) {
  nlohmann::json j = nlohmann::json::parse(doc);
  ModelSpec s;
  s.combine_rule = combine_rule_from_name(j.at("combine_rule").get<std::string>());
  s.block_count = j.at("block_count").get<int>();
  s.width = j.at("width").get<int>();
  s.se_ratio = j.at("se_ratio").get<int>();
  s.kernel_heights = j.at("kernel_heights").get<std::vector<int>>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

Graph::NodeId se_block(Graph& g, Graph::NodeId features, Graph::NodeId reduce_w,
                       Graph::NodeId reduce_b, Graph::NodeId expand_w, Graph::NodeId expand_b) {
  Graph::NodeId pooled = g.global_avg_pool(features);
  Graph::NodeId z = g.relu(g.add_bias(g.matmul(pooled, reduce_w), reduce_b));
  Graph::NodeId s = g.sigmoid(g.add_bias(g.matmul(z, expand_w), expand_b));
  return g.channel_scale(features, s);
}

Graph::NodeId dense_average_block(Graph& g, Graph::NodeId x0, CombineRule rule,
                                  const std::vector<Graph::NodeId>& weights,
                                  const std::vector<Graph::NodeId>& biases) {
  if (weights.size() != biases.size())
    throw ContractError("dense_average_block: weight/bias count mismatch");
  std::vector<Graph::NodeId> history = {x0};
  Graph::NodeId x = x0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Graph::NodeId h = g.relu(g.add_bias(g.matmul(x, weights[l]), biases[l]));
    x = combine(g, rule, history, h);
    // Concat tracks raw layer outputs (DenseNet-style); the summing rules
    // track the combined outputs x_i.
    history.push_back(rule == CombineRule::Concat ? h : x);
  }
  return x;
}

int hidden_depth(const ModelSpec& spec) { return 2 + 4 * spec.block_count; }

ForecastNet::ForecastNet(ModelSpec spec) : spec_(std::move(spec)) {
  if (spec_.width < 1 || spec_.block_count < 1 || spec_.se_ratio < 1 ||
      spec_.kernel_heights.empty())
    throw ContractError("ModelSpec: width, block_count, se_ratio and kernel_heights must be set");
  const auto w = static_cast<std::size_t>(spec_.width);
  const std::size_t hid = se_hidden_width();
  for (int k : spec_.kernel_heights) {
    if (k < 1 || static_cast<std::size_t>(k) > InputDims::lookback)
      throw ContractError("ModelSpec: kernel height out of range");
    const std::string p = "conv" + std::to_string(k);
    layout_.emplace_back(p + ".kernel",
                         Shape{static_cast<std::size_t>(k), InputDims::ls_cols, 1, w});
    layout_.emplace_back(p + ".bias", Shape{w});
    layout_.emplace_back(p + ".se.reduce.w", Shape{w, hid});
    layout_.emplace_back(p + ".se.reduce.b", Shape{hid});
    layout_.emplace_back(p + ".se.expand.w", Shape{hid, w});
    layout_.emplace_back(p + ".se.expand.b", Shape{w});
  }
  layout_.emplace_back("temp.w", Shape{InputDims::lookback, w});
  layout_.emplace_back("temp.b", Shape{w});
  layout_.emplace_back("cal.w", Shape{InputDims::calendar, w});
  layout_.emplace_back("cal.b", Shape{w});
  layout_.emplace_back("merge.w", Shape{(spec_.kernel_heights.size() + 2) * w, w});
  layout_.emplace_back("merge.b", Shape{w});
  for (int b = 0; b < spec_.block_count; ++b)
    for (int l = 0; l < 4; ++l) {
      const std::size_t in_w = spec_.combine_rule == CombineRule::Concat
                                   ? (static_cast<std::size_t>(l) + 1) * w
                                   : w;
      const std::string p = "block" + std::to_string(b) + ".layer" + std::to_string(l);
      layout_.emplace_back(p + ".w", Shape{in_w, w});
      layout_.emplace_back(p + ".b", Shape{w});
    }
  layout_.emplace_back("out.w", Shape{w, 1});
  layout_.emplace_back("out.b", Shape{1});
}

std::size_t ForecastNet::se_hidden_width() const {
  const std::size_t h = static_cast<std::size_t>(spec_.width) /
                        static_cast<std::size_t>(spec_.se_ratio);
  return h < 1 ? 1 : h;
}

void ForecastNet::init_params(ParameterStore& store, double init_sd) const {
  for (std::size_t i = 0; i < layout_.size(); ++i)
    store.add(layout_[i].first,
              truncated_normal(layout_[i].second, 0.0, init_sd, splitmix64(spec_.seed ^ i)));
}

Graph::NodeId ForecastNet::forward(Graph& g, const BatchInputs& in, const ParameterStore& store,
                                   std::vector<Graph::NodeId>* param_nodes) const {
  if (store.size() != layout_.size())
    throw ContractError("forward: parameter store does not match model layout");
  const auto w = static_cast<std::size_t>(spec_.width);
  if (in.ls.rank() != 4 || in.ls.shape[1] != InputDims::lookback ||
      in.ls.shape[2] != InputDims::ls_cols || in.ls.shape[3] != 1)
    throw ContractError("forward: malformed bundle field ls, expected [N,48,2,1], got " +
                        shape_str(in.ls.shape));
  const std::size_t n = in.ls.shape[0];
  if (in.temperature.rank() != 2 || in.temperature.shape[0] != n ||
      in.temperature.shape[1] != InputDims::lookback)
    throw ContractError("forward: malformed bundle field temperature, expected [N,48], got " +
                        shape_str(in.temperature.shape));
  if (in.calendar.rank() != 2 || in.calendar.shape[0] != n ||
      in.calendar.shape[1] != InputDims::calendar)
    throw ContractError("forward: malformed bundle field calendar, expected [N,19], got " +
                        shape_str(in.calendar.shape));

  std::vector<Graph::NodeId> pids(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) pids[i] = g.parameter(store.value(i));
  if (param_nodes) *param_nodes = pids;
  auto p = [&](const std::string& name) { return pids[store.index(name)]; };

  Graph::NodeId ls = g.input(in.ls);
  Graph::NodeId temp = g.input(in.temperature);
  Graph::NodeId cal = g.input(in.calendar);

  std::vector<Graph::NodeId> branches;
  for (int k : spec_.kernel_heights) {
    const std::string c = "conv" + std::to_string(k);
    Graph::NodeId y = g.relu(g.add_bias(g.conv2d_valid(ls, p(c + ".kernel")), p(c + ".bias")));
    y = se_block(g, y, p(c + ".se.reduce.w"), p(c + ".se.reduce.b"), p(c + ".se.expand.w"),
                 p(c + ".se.expand.b"));
    branches.push_back(g.global_avg_pool(y));
  }
  branches.push_back(g.relu(g.add_bias(g.matmul(temp, p("temp.w")), p("temp.b"))));
  branches.push_back(g.relu(g.add_bias(g.matmul(cal, p("cal.w")), p("cal.b"))));

  Graph::NodeId x = g.relu(g.add_bias(g.matmul(g.concat_last(branches), p("merge.w")),
                                      p("merge.b")));
  for (int b = 0; b < spec_.block_count; ++b) {
    std::vector<Graph::NodeId> ws, bs;
    for (int l = 0; l < 4; ++l) {
      const std::string q = "block" + std::to_string(b) + ".layer" + std::to_string(l);
      ws.push_back(p(q + ".w"));
      bs.push_back(p(q + ".b"));
    }
    x = dense_average_block(g, x, spec_.combine_rule, ws, bs);
  }
  (void)w;
  return g.add_bias(g.matmul(x, p("out.w")), p("out.b"));
}

std::vector<GradientGrowthRow> gradient_growth_study(CombineRule rule,
                                                     const std::vector<int>& depths,
                                                     const GradientGrowthConfig& cfg) {
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (depths[i] < 1) throw ContractError("gradient_growth_study: depths must be positive");
    if (i > 0 && depths[i] <= depths[i - 1])
      throw ContractError("gradient_growth_study: depths must be ascending");
  }
  const auto w = static_cast<std::size_t>(cfg.width);
  std::mt19937_64 rng(splitmix64(cfg.seed));
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  Tensor x0_val({1, w});
  for (double& v : x0_val.data) v = uni(rng);

  std::vector<GradientGrowthRow> rows;
  for (int depth : depths) {
    Graph g;
    Graph::NodeId x0 = g.input(x0_val);
    std::vector<Graph::NodeId> history = {x0};
    Graph::NodeId x = x0;
    std::size_t params = 0;
    for (int l = 0; l < depth; ++l) {
      const std::size_t in_w = g.value(x).shape[1];
      Tensor wv = truncated_normal({in_w, w}, 0.0, cfg.init_sd,
                                   splitmix64(cfg.seed ^ (0x5151ULL + l)));
      Tensor bv = truncated_normal({w}, 0.0, cfg.init_sd,
                                   splitmix64(cfg.seed ^ (0xb1b1ULL + l)));
      params += wv.size() + bv.size();
      Graph::NodeId h = g.relu(g.add_bias(g.matmul(x, g.parameter(wv)), g.parameter(bv)));
      x = combine(g, rule, history, h);
      history.push_back(rule == CombineRule::Concat ? h : x);
    }
    Graph::NodeId target = g.input(Tensor::zeros(g.value(x).shape));
    Graph::NodeId loss = g.mean_abs_err(x, target);
    g.backward(loss);
    const Tensor& gx = g.grad(x0);
    double norm = 0;
    for (double v : gx.data) norm += v * v;
    rows.push_back({depth, std::sqrt(norm), params});
  }
  return rows;
}

}  // namespace danet
