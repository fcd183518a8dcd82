// Copyright 2026 The segtrack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "segtrack/embed_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "segtrack/errors.hpp"

namespace segtrack {

unsigned parse_branches(const std::string& s) {
  unsigned b = 0;
  for (char c : s) {
    switch (c) {
      case 'f': b |= kBranchFg; break;
      case 'e': b |= kBranchEnv; break;
      case 'p': b |= kBranchPos; break;
      case 'a': b |= kBranchAgg; break;
      default: throw ConfigError(std::string("unknown embedding branch '") + c + "' (expected f, e, p or a)");
    }
  }
  if (!b) throw ConfigError("empty branch set");
  return b;
}

std::string branch_names(unsigned b) {
  std::string s;
  if (b & kBranchFg) s += 'f';
  if (b & kBranchEnv) s += 'e';
  if (b & kBranchPos) s += 'p';
  if (b & kBranchAgg) s += 'a';
  return s;
}

void EmbedNetConfig::validate() const {
  if (num_categories < 1) throw ConfigError("embed: num_categories must be >= 1");
  for (const auto* w : {&fg_widths, &env_widths, &pos_widths, &agg_widths}) {
    if (w->empty()) throw ConfigError("embed: every branch needs at least one layer");
    for (int v : *w)
      if (v < 1) throw ConfigError("embed: layer widths must be >= 1");
  }
}

KeyValueConfig EmbedNetConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("embed.num_categories", num_categories);
  kv.set("embed.fg_widths", join_ints(fg_widths));
  kv.set("embed.env_widths", join_ints(env_widths));
  kv.set("embed.pos_widths", join_ints(pos_widths));
  kv.set("embed.agg_widths", join_ints(agg_widths));
  kv.set("embed.init_seed", static_cast<long long>(init_seed));
  return kv;
}

EmbedNetConfig EmbedNetConfig::from_kv(const KeyValueConfig& kv) {
  EmbedNetConfig c;
  c.num_categories = static_cast<int>(kv.get_int("embed.num_categories", c.num_categories));
  c.fg_widths = kv.get_int_list("embed.fg_widths", c.fg_widths);
  c.env_widths = kv.get_int_list("embed.env_widths", c.env_widths);
  c.pos_widths = kv.get_int_list("embed.pos_widths", c.pos_widths);
  c.agg_widths = kv.get_int_list("embed.agg_widths", c.agg_widths);
  c.init_seed = static_cast<std::uint64_t>(kv.get_int("embed.init_seed", static_cast<long long>(c.init_seed)));
  c.validate();
  return c;
}

namespace {

// n indices into [0, size): a uniform subset when size >= n, else uniform draws with replacement.
std::vector<std::size_t> sample_indices(std::size_t size, int n, std::mt19937_64& rng) {
  std::vector<std::size_t> out(static_cast<std::size_t>(n));
  if (size >= out.size()) {
    std::vector<std::size_t> all(size);
    for (std::size_t i = 0; i < size; ++i) all[i] = i;
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uniform_int_distribution<std::size_t> d(i, size - 1);
      std::swap(all[i], all[d(rng)]);
      out[i] = all[i];
    }
  } else {
    std::uniform_int_distribution<std::size_t> d(0, size - 1);
    for (auto& v : out) v = d(rng);
  }
  return out;
}

}  // namespace

PointCloudPair build_point_clouds(const Image& image, const Mask& instance, std::span<const std::uint8_t> categories,
                                  const PointCloudOptions& opt, std::mt19937_64& rng) {
  const int H = image.height, W = image.width;
  if (instance.height() != H || instance.width() != W) throw ContractViolation("build_point_clouds: size mismatch");
  if (categories.size() != static_cast<std::size_t>(H) * W)
    throw ContractViolation("build_point_clouds: category map size mismatch");
  if (!instance.any()) throw ContractViolation("build_point_clouds: empty instance mask");
  if (opt.num_fg < 1 || opt.num_env < 1 || !(opt.enlargement >= 1.0))
    throw ConfigError("point clouds: need num_fg, num_env >= 1 and enlargement >= 1");

  const BBox box = enlarge_bbox(tight_bbox(instance), opt.enlargement, H, W);
  // pixels whose centers lie inside the box
  const int x0 = std::max(0, static_cast<int>(std::ceil(box.x_min - 0.5)));
  const int x1 = std::min(W, static_cast<int>(std::floor(box.x_max - 0.5)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::ceil(box.y_min - 0.5)));
  const int y1 = std::min(H, static_cast<int>(std::floor(box.y_max - 0.5)) + 1);
  std::vector<std::size_t> fg, env, ring;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      (instance[i] ? fg : env).push_back(i);
      if (y == y0 || y == y1 - 1 || x == x0 || x == x1 - 1) ring.push_back(i);
    }

  PointCloudPair p;
  p.bbox = {box.center_x() / W, box.center_y() / H, box.width() / W, box.height() / H};
  const double cx = box.center_x(), cy = box.center_y(), bw = box.width(), bh = box.height();
  auto dx = [&](std::size_t i) { return (static_cast<double>(i % W) + 0.5 - cx) / bw; };
  auto dy = [&](std::size_t i) { return (static_cast<double>(i / W) + 0.5 - cy) / bh; };

  p.fg.resize(opt.num_fg, 5);
  const auto fi = sample_indices(fg.size(), opt.num_fg, rng);
  for (int r = 0; r < opt.num_fg; ++r) {
    const std::size_t i = fg[fi[r]];
    const int y = static_cast<int>(i / W), x = static_cast<int>(i % W);
    p.fg(r, 0) = dx(i);
    p.fg(r, 1) = dy(i);
    for (int c = 0; c < 3; ++c) p.fg(r, 2 + c) = image.at(y, x, c) / 255.0;
  }

  if (env.empty()) {
    env = ring;
    p.env_from_border = true;
  }
  const int ncat = kNumSemanticClasses;
  p.env = nn::RowMat<double>::Zero(opt.num_env, 2 + ncat);
  const auto ei = sample_indices(env.size(), opt.num_env, rng);
  for (int r = 0; r < opt.num_env; ++r) {
    const std::size_t i = env[ei[r]];
    p.env(r, 0) = dx(i);
    p.env(r, 1) = dy(i);
    const int c = categories[i];
    if (c < 0 || c >= ncat) throw ContractViolation("build_point_clouds: category out of range");
    p.env(r, 2 + c) = 1.0;
  }
  return p;
}

std::vector<double> EmbeddingBundle::m() const {
  std::vector<double> out;
  out.reserve(m_f.size() + m_e.size() + m_p.size() + m_a.size());
  for (const auto* v : {&m_f, &m_e, &m_p, &m_a}) out.insert(out.end(), v->begin(), v->end());
  return out;
}

template <typename T>
EmbedNet<T>::EmbedNet(const EmbedNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.init_seed);
  fg_ = make_mlp("fg", cfg_.fg_point_dim(), cfg_.fg_widths, true, rng);
  env_ = make_mlp("env", cfg_.env_point_dim(), cfg_.env_widths, true, rng);
  pos_ = make_mlp("pos", 4, cfg_.pos_widths, false, rng);
  agg_ = make_mlp("agg", cfg_.fg_dim() + cfg_.env_dim() + cfg_.pos_dim(), cfg_.agg_widths, false, rng);
}

template <typename T>
typename EmbedNet<T>::Mlp EmbedNet<T>::make_mlp(const std::string& name, int in, const std::vector<int>& widths,
                                                bool act_last, std::mt19937_64& rng) {
  Mlp m;
  m.act_last = act_last;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    m.layers.emplace_back(params_, name + ".l" + std::to_string(i), i ? widths[i - 1] : in, widths[i]);
    const bool linear_out = i + 1 == widths.size() && !act_last;
    m.layers.back().init(rng, linear_out ? 1.0 : std::sqrt(2.0));
  }
  return m;
}

template <typename T>
void EmbedNet<T>::run_mlp(const Mlp& mlp, const nn::RowMat<T>& x, std::vector<nn::RowMat<T>>& acts) {
  acts.clear();
  acts.push_back(x);
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    nn::RowMat<T> y = mlp.layers[i].forward(acts.back());
    if (i + 1 < mlp.layers.size() || mlp.act_last) nn::leaky_relu_inplace(y);
    acts.push_back(std::move(y));
  }
}

template <typename T>
nn::RowMat<T> EmbedNet<T>::backward_mlp(Mlp& mlp, const std::vector<nn::RowMat<T>>& acts, nn::RowMat<T> d,
                                        bool need_dx) {
  for (std::size_t k = mlp.layers.size(); k-- > 0;) {
    if (k + 1 < mlp.layers.size() || mlp.act_last) nn::leaky_relu_backward_inplace(acts[k + 1], d);
    d = mlp.layers[k].backward(acts[k], d, need_dx || k > 0);
  }
  return d;
}

namespace {

template <typename T>
std::vector<double> max_pool(const nn::RowMat<T>& x, std::vector<int>* arg) {
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  if (arg) arg->assign(out.size(), 0);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < x.rows(); ++r)
      if (x(r, c) > x(best, c)) best = r;
    out[c] = static_cast<double>(x(best, c));
    if (arg) (*arg)[c] = static_cast<int>(best);
  }
  return out;
}

template <typename T>
nn::RowMat<T> to_row(std::span<const double> v) {
  nn::RowMat<T> r(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r(0, static_cast<Eigen::Index>(i)) = static_cast<T>(v[i]);
  return r;
}

template <typename T>
std::vector<double> to_vec(const nn::RowMat<T>& r) {
  std::vector<double> v(static_cast<std::size_t>(r.size()));
  for (Eigen::Index i = 0; i < r.size(); ++i) v[i] = static_cast<double>(r.data()[i]);
  return v;
}

}  // namespace

template <typename T>
EmbeddingBundle EmbedNet<T>::forward(const PointCloudPair& pair, unsigned active, Trace* trace) const {
  if (pair.fg.cols() != cfg_.fg_point_dim() || pair.env.cols() != cfg_.env_point_dim())
    throw ContractViolation("EmbedNet: point cloud width mismatch");
  if (pair.fg.rows() < 1 || pair.env.rows() < 1) throw ContractViolation("EmbedNet: empty point cloud");
  Trace local;
  Trace& tr = trace ? *trace : local;
  tr = Trace{};
  tr.active = active;
  EmbeddingBundle b;
  b.m_f.assign(cfg_.fg_dim(), 0.0);
  b.m_e.assign(cfg_.env_dim(), 0.0);
  b.m_p.assign(cfg_.pos_dim(), 0.0);
  b.m_a.assign(cfg_.agg_dim(), 0.0);
  if (active & kBranchFg) {
    run_mlp(fg_, pair.fg.template cast<T>(), tr.fg);
    b.m_f = max_pool(tr.fg.back(), &tr.fg_arg);
  }
  if (active & kBranchEnv) {
    run_mlp(env_, pair.env.template cast<T>(), tr.env);
    b.m_e = max_pool(tr.env.back(), &tr.env_arg);
  }
  if (active & kBranchPos) {
    run_mlp(pos_, to_row<T>(pair.bbox), tr.pos);
    b.m_p = to_vec(tr.pos.back());
  }
  if (active & kBranchAgg) {
    std::vector<double> in = b.m_f;
    in.insert(in.end(), b.m_e.begin(), b.m_e.end());
    in.insert(in.end(), b.m_p.begin(), b.m_p.end());
    run_mlp(agg_, to_row<T>(in), tr.agg);
    b.m_a = to_vec(tr.agg.back());
  }
  return b;
}

template <typename T>
void EmbedNet<T>::backward(const Trace& tr, std::span<const double> dm) {
  if (dm.size() != static_cast<std::size_t>(cfg_.dim())) throw ContractViolation("EmbedNet::backward: gradient size");
  const std::size_t nf = cfg_.fg_dim(), ne = cfg_.env_dim(), np = cfg_.pos_dim();
  std::vector<double> df(dm.begin(), dm.begin() + nf), de(dm.begin() + nf, dm.begin() + nf + ne),
      dp(dm.begin() + nf + ne, dm.begin() + nf + ne + np);
  if (tr.active & kBranchAgg) {
    nn::RowMat<T> din = backward_mlp(agg_, tr.agg, to_row<T>(dm.subspan(nf + ne + np)), true);
    for (std::size_t i = 0; i < nf; ++i) df[i] += static_cast<double>(din(0, i));
    for (std::size_t i = 0; i < ne; ++i) de[i] += static_cast<double>(din(0, nf + i));
    for (std::size_t i = 0; i < np; ++i) dp[i] += static_cast<double>(din(0, nf + ne + i));
  }
  auto pool_back = [](Mlp& mlp, const std::vector<nn::RowMat<T>>& acts, const std::vector<int>& arg,
                      const std::vector<double>& d) {
    nn::RowMat<T> g = nn::RowMat<T>::Zero(acts.back().rows(), acts.back().cols());
    for (std::size_t c = 0; c < d.size(); ++c) g(arg[c], static_cast<Eigen::Index>(c)) = static_cast<T>(d[c]);
    backward_mlp(mlp, acts, std::move(g), false);
  };
  if (tr.active & kBranchFg) pool_back(fg_, tr.fg, tr.fg_arg, df);
  if (tr.active & kBranchEnv) pool_back(env_, tr.env, tr.env_arg, de);
  if (tr.active & kBranchPos) backward_mlp(pos_, tr.pos, to_row<T>(dp), false);
}

template <typename T>
const char* EmbedNet<T>::prefix(Branch b) {
  switch (b) {
    case kBranchFg: return "fg.";
    case kBranchEnv: return "env.";
    case kBranchPos: return "pos.";
    case kBranchAgg: return "agg.";
    default: throw ContractViolation("EmbedNet::prefix: not a single branch");
  }
}

template <typename T>
void EmbedNet<T>::set_frozen(unsigned branches, bool frozen) {
  for (Branch b : {kBranchFg, kBranchEnv, kBranchPos, kBranchAgg}) {
    if (!(branches & b)) continue;
    const std::string pre = prefix(b);
    for (auto& p : params_.all())
      if (p.name.rfind(pre, 0) == 0) p.frozen = frozen;
  }
}

template class EmbedNet<float>;
template class EmbedNet<double>;

namespace {

double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

void check_batch(const std::vector<std::vector<double>>& emb, const std::vector<int>& labels) {
  if (emb.size() != labels.size()) throw ContractViolation("triplet loss: embeddings and labels differ in length");
  for (const auto& e : emb)
    if (e.size() != emb.front().size()) throw ContractViolation("triplet loss: embedding dimensions differ");
  if (std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels.front(); }))
    throw ContractViolation("triplet loss: batch needs at least two distinct labels");
}

}  // namespace

double batch_hard_triplet_loss(const std::vector<std::vector<double>>& emb, const std::vector<int>& labels,
                               double margin, std::vector<std::vector<double>>* grad) {
  check_batch(emb, labels);
  const std::size_t n = emb.size();
  if (grad) {
    grad->assign(n, std::vector<double>(emb.front().size(), 0.0));
  }
  // d(x, y) gradient with respect to x; zero at coincident points.
  auto add_dist_grad = [&](std::size_t i, std::size_t j, double w) {
    const double d = dist(emb[i], emb[j]);
    if (d <= 0.0) return;
    for (std::size_t k = 0; k < emb[i].size(); ++k) {
      const double g = w * (emb[i][k] - emb[j][k]) / d;
      (*grad)[i][k] += g;
      (*grad)[j][k] -= g;
    }
  };
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t a = 0; a < n; ++a) {
    int pos = -1, neg = -1;
    double dp = -1.0, dn = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double d = dist(emb[a], emb[j]);
      if (labels[j] == labels[a]) {
        if (d > dp) dp = d, pos = static_cast<int>(j);
      } else if (d < dn) {
        dn = d, neg = static_cast<int>(j);
      }
    }
    if (pos < 0) continue;
    ++anchors;
    const double v = dp - dn + margin;
    if (v <= 0.0) continue;
    total += v;
    if (grad) {
      add_dist_grad(a, pos, 1.0);
      add_dist_grad(a, neg, -1.0);
    }
  }
  if (!anchors) throw ContractViolation("triplet loss: no label occurs twice");
  if (grad)
    for (auto& g : *grad)
      for (auto& v : g) v /= static_cast<double>(anchors);
  return total / static_cast<double>(anchors);
}

double triplet_loss_oracle(const std::vector<std::vector<double>>& emb, const std::vector<int>& labels, double margin) {
  check_batch(emb, labels);
  const std::size_t n = emb.size();
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t a = 0; a < n; ++a) {
    bool has_pos = false;
    double worst = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      has_pos = true;
      for (std::size_t q = 0; q < n; ++q) {
        if (labels[q] == labels[a]) continue;
        worst = std::max(worst, dist(emb[a], emb[p]) - dist(emb[a], emb[q]) + margin);
      }
    }
    if (!has_pos) continue;
    ++anchors;
    total += worst;
  }
  if (!anchors) throw ContractViolation("triplet loss: no label occurs twice");
  return total / static_cast<double>(anchors);
}

}  // namespace segtrack
