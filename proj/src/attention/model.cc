#include "cogscreen/attention/model.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "cogscreen/error.h"
#include "cogscreen/tfidf.h"

namespace cogscreen::attn {

namespace {

constexpr double kLnEps = 1e-5;
const double kGeluC = std::sqrt(2.0 / std::numbers::pi);

std::string layer_name(int l, const char* part) { return "layer" + std::to_string(l) + "." + part; }

}  // namespace

// ---- vocabulary -----------------------------------------------------------

TokenVocab::TokenVocab() : tokens_{"[PAD]", "[UNK]", "[CLS]"} {
  for (int i = 0; i < 3; ++i) index_[tokens_[static_cast<std::size_t>(i)]] = i;
}

TokenVocab TokenVocab::build(std::span<const std::string> docs, int min_freq) {
  if (min_freq < 1) throw ConfigError("min_freq must be at least 1");
  std::map<std::string, int, std::less<>> freq;
  for (const auto& doc : docs) {
    for (auto w : split_terms(doc)) {
      auto it = freq.find(w);
      if (it == freq.end()) it = freq.emplace(std::string(w), 0).first;
      ++it->second;
    }
  }
  TokenVocab v;
  for (const auto& [word, n] : freq) {
    if (n < min_freq || v.index_.contains(word)) continue;
    v.index_[word] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(word);
  }
  return v;
}

TokenVocab TokenVocab::from_tokens(std::vector<std::string> tokens) {
  TokenVocab v;
  if (tokens.size() < 3 || tokens[0] != v.tokens_[0] || tokens[1] != v.tokens_[1] ||
      tokens[2] != v.tokens_[2]) {
    throw ConfigError("vocabulary must start with [PAD], [UNK], [CLS]");
  }
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

int TokenVocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> TokenVocab::encode(std::string_view clean_text) const {
  std::vector<int> ids;
  for (auto w : split_terms(clean_text)) ids.push_back(id(w));
  return ids;
}

// ---- windows and configs --------------------------------------------------

int WindowConfig::stride() const {
  return std::max(1, static_cast<int>(std::floor(window_len * (1.0 - overlap_fraction))));
}

void WindowConfig::validate() const {
  if (window_len < 1) throw ConfigError("window_len must be positive");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw ConfigError("overlap_fraction must be in [0, 1)");
  }
}

std::vector<WindowSpan> slice_windows(std::size_t n, const WindowConfig& config) {
  config.validate();
  std::vector<WindowSpan> out;
  const auto w = static_cast<std::size_t>(config.window_len);
  const auto stride = static_cast<std::size_t>(config.stride());
  for (std::size_t start = 0; start < n; start += stride) {
    out.push_back({start, std::min(start + w, n)});
    if (start + w >= n) break;
  }
  return out;
}

void AttnConfig::validate() const {
  if (vocab_size < 3) throw ConfigError("vocab_size must cover the reserved tokens");
  if (d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (local_radius < 1) throw ConfigError("local_radius must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

TrainConfig TrainConfig::full_preset() {
  TrainConfig c;
  c.learning_rate = 7.09e-6;
  c.adam_eps = 1e-9;
  c.epochs = 4;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must be in [0, 1)");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

// ---- parameters -----------------------------------------------------------

void AttnModel::layout() {
  const int d = config_.d_model, f = config_.d_ff;
  blocks_.clear();
  auto add = [&](std::string name, int rows, int cols) { blocks_.push_back({std::move(name), rows, cols, 0}); };
  add("embedding", config_.vocab_size, d);
  for (int l = 0; l < config_.n_layers; ++l) {
    add(layer_name(l, "ln1.gamma"), 1, d);
    add(layer_name(l, "ln1.beta"), 1, d);
    for (const char* m : {"q", "k", "v", "o"}) {
      add(layer_name(l, (std::string("w") + m).c_str()), d, d);
      add(layer_name(l, (std::string("b") + m).c_str()), 1, d);
    }
    add(layer_name(l, "ln2.gamma"), 1, d);
    add(layer_name(l, "ln2.beta"), 1, d);
    add(layer_name(l, "w1"), d, f);
    add(layer_name(l, "b1"), 1, f);
    add(layer_name(l, "w2"), f, d);
    add(layer_name(l, "b2"), 1, d);
  }
  add("final_ln.gamma", 1, d);
  add("final_ln.beta", 1, d);
  add("head.w", 1, d);
  add("head.b", 1, 1);
  std::size_t offset = 0;
  by_name_.clear();
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].offset = offset;
    offset += blocks_[i].size();
    by_name_[blocks_[i].name] = i;
  }
  params_.assign(offset, 0.0);
}

AttnModel::AttnModel(const AttnConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  layout();
  std::mt19937_64 rng(seed);
  auto fill = [&](const std::string& name, double sd) {
    std::normal_distribution<double> dist(0.0, sd);
    for (auto& x : mut(name).reshaped()) x = dist(rng);
  };
  const double d = config_.d_model;
  const double depth = std::sqrt(2.0 * config_.n_layers);
  fill("embedding", 1.0);
  for (int l = 0; l < config_.n_layers; ++l) {
    mut(layer_name(l, "ln1.gamma")).setOnes();
    mut(layer_name(l, "ln2.gamma")).setOnes();
    fill(layer_name(l, "wq"), 1.0 / std::sqrt(d));
    fill(layer_name(l, "wk"), 1.0 / std::sqrt(d));
    fill(layer_name(l, "wv"), 1.0 / std::sqrt(d));
    fill(layer_name(l, "wo"), 1.0 / std::sqrt(d) / depth);
    fill(layer_name(l, "w1"), 1.0 / std::sqrt(d));
    fill(layer_name(l, "w2"), 1.0 / std::sqrt(config_.d_ff) / depth);
  }
  mut("final_ln.gamma").setOnes();
}

AttnModel AttnModel::from_parts(const AttnConfig& config, std::vector<ParamBlock> blocks,
                                std::vector<double> params) {
  AttnModel m;
  m.config_ = config;
  m.config_.validate();
  m.layout();
  if (blocks.size() != m.blocks_.size()) throw DataError("parameter block count does not match the config");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& want = m.blocks_[i];
    if (blocks[i].name != want.name || blocks[i].rows != want.rows || blocks[i].cols != want.cols) {
      throw DataError("parameter block '" + blocks[i].name + "' does not match the config (expected '" +
                      want.name + "' " + std::to_string(want.rows) + "x" + std::to_string(want.cols) + ")");
    }
  }
  if (params.size() != m.params_.size()) throw DataError("parameter count does not match the config");
  for (double x : params) {
    if (!std::isfinite(x)) throw DataError("non-finite model parameter");
  }
  m.params_ = std::move(params);
  return m;
}

const ParamBlock& AttnModel::block(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) throw NotFoundError("no parameter block '" + std::string(name) + "'");
  return blocks_[it->second];
}

Eigen::Map<const RowMatrix> AttnModel::view(const ParamBlock& b) const {
  return {params_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<RowMatrix> AttnModel::view(const ParamBlock& b, std::vector<double>& buffer) const {
  return {buffer.data() + b.offset, b.rows, b.cols};
}

RowMatrix positional_encoding(int n, int d) {
  RowMatrix pe(n, d);
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
      pe(pos, i) = std::sin(pos * freq);
      if (i + 1 < d) pe(pos, i + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

// ---- forward / backward ---------------------------------------------------

namespace {

struct LayerNormCache {
  RowMatrix xhat;
  Eigen::VectorXd rstd;
};

RowMatrix layer_norm(const RowMatrix& x, Eigen::Map<const RowMatrix> gamma, Eigen::Map<const RowMatrix> beta,
                     LayerNormCache* cache) {
  const auto d = static_cast<double>(x.cols());
  RowMatrix xhat(x.rows(), x.cols());
  Eigen::VectorXd rstd(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).sum() / d;
    const double var = (x.row(i).array() - mu).square().sum() / d;
    rstd[i] = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mu) * rstd[i];
  }
  RowMatrix y = (xhat.array().rowwise() * gamma.row(0).array()).rowwise() + beta.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

// Returns dx; accumulates into dgamma, dbeta.
RowMatrix layer_norm_backward(const RowMatrix& dy, const LayerNormCache& c, Eigen::Map<const RowMatrix> gamma,
                              Eigen::Map<RowMatrix> dgamma, Eigen::Map<RowMatrix> dbeta) {
  dgamma.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();
  RowMatrix dxhat = dy.array().rowwise() * gamma.row(0).array();
  RowMatrix dx(dy.rows(), dy.cols());
  const auto d = static_cast<double>(dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).sum() / d;
    const double m2 = dxhat.row(i).dot(c.xhat.row(i)) / d;
    dx.row(i) = c.rstd[i] * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
  }
  return dx;
}

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + 0.044715 * u * u * u))); }

double gelu_grad(double u) {
  const double t = std::tanh(kGeluC * (u + 0.044715 * u * u * u));
  return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * u * u);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct LayerCache {
  RowMatrix x_in;
  LayerNormCache ln1;
  RowMatrix a, q, k, v, ctx;
  std::vector<double> drop1;
  RowMatrix h;
  LayerNormCache ln2;
  RowMatrix c, u, g;
  std::vector<double> drop2;
};

struct Cache {
  std::vector<LayerCache> layers;
  LayerNormCache final_ln;
  RowMatrix z;  // 1 x d, normalized CLS state
};

struct BlockViews {
  const AttnModel& m;
  Eigen::Map<const RowMatrix> operator()(const std::string& name) const { return m.view(m.block(name)); }
};

// Inverted dropout mask: 0 or 1/(1-p).
std::vector<double> dropout_mask(std::size_t n, double p, std::mt19937_64& rng) {
  std::vector<double> mask(n, 1.0);
  if (p <= 0) return mask;
  std::bernoulli_distribution keep(1.0 - p);
  for (auto& x : mask) x = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return mask;
}

void apply_mask(RowMatrix& x, const std::vector<double>& mask) {
  x.array() *= Eigen::Map<const RowMatrix>(mask.data(), x.rows(), x.cols()).array();
}

ForwardResult run_forward(const AttnModel& model, std::span<const int> window, const ForwardOptions& opt,
                          Cache* cache) {
  const auto& cfg = model.config();
  const BlockViews P{model};
  const int n = static_cast<int>(window.size()) + 1;
  const int dh = cfg.d_head();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool dropping = opt.training && cfg.dropout > 0;
  std::mt19937_64 rng(opt.dropout_seed);

  ForwardResult r;
  r.ids.reserve(static_cast<std::size_t>(n));
  r.ids.push_back(TokenVocab::kCls);
  for (int t : window) r.ids.push_back(t >= 0 && t < cfg.vocab_size ? t : TokenVocab::kUnk);

  std::vector<char> key_mask(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < key_mask.size(); ++i) key_mask[i] = r.ids[i] != TokenVocab::kPad;
  r.pattern = local_global_pattern(n, cfg.local_radius, key_mask);

  const auto emb = P("embedding");
  RowMatrix x = positional_encoding(n, cfg.d_model);
  for (int i = 0; i < n; ++i) x.row(i) += emb.row(r.ids[static_cast<std::size_t>(i)]);

  if (cache) cache->layers.resize(static_cast<std::size_t>(cfg.n_layers));
  r.probs.resize(static_cast<std::size_t>(cfg.n_layers * cfg.n_heads));
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerCache local;
    LayerCache& c = cache ? cache->layers[static_cast<std::size_t>(l)] : local;
    auto W = [&](const char* part) { return P(layer_name(l, part)); };
    if (cache) c.x_in = x;
    c.a = layer_norm(x, W("ln1.gamma"), W("ln1.beta"), &c.ln1);
    c.q = (c.a * W("wq")).rowwise() + W("bq").row(0);
    c.k = (c.a * W("wk")).rowwise() + W("bk").row(0);
    c.v = (c.a * W("wv")).rowwise() + W("bv").row(0);
    c.ctx.resize(n, cfg.d_model);
    for (int h = 0; h < cfg.n_heads; ++h) {
      auto q = c.q.middleCols(h * dh, dh);
      auto k = c.k.middleCols(h * dh, dh);
      auto v = c.v.middleCols(h * dh, dh);
      auto out = c.ctx.middleCols(h * dh, dh);
      auto& probs = r.probs[static_cast<std::size_t>(l * cfg.n_heads + h)];
      switch (opt.mode) {
        case AttentionMode::kLocal:
          probs.resize(r.pattern.nnz());
          local_attention(q, k, v, r.pattern, scale, out, probs);
          break;
        case AttentionMode::kLocalSerial:
          probs.resize(r.pattern.nnz());
          local_attention_serial(q, k, v, r.pattern, scale, out, probs);
          break;
        case AttentionMode::kFull:
          full_attention(q, k, v, scale, out);
          break;
      }
    }
    RowMatrix o = (c.ctx * W("wo")).rowwise() + W("bo").row(0);
    if (dropping) {
      c.drop1 = dropout_mask(static_cast<std::size_t>(o.size()), cfg.dropout, rng);
      apply_mask(o, c.drop1);
    }
    c.h = x + o;
    c.c = layer_norm(c.h, W("ln2.gamma"), W("ln2.beta"), &c.ln2);
    c.u = (c.c * W("w1")).rowwise() + W("b1").row(0);
    c.g = c.u.unaryExpr([](double u) { return gelu(u); });
    RowMatrix f = (c.g * W("w2")).rowwise() + W("b2").row(0);
    if (dropping) {
      c.drop2 = dropout_mask(static_cast<std::size_t>(f.size()), cfg.dropout, rng);
      apply_mask(f, c.drop2);
    }
    x = c.h + f;
  }

  LayerNormCache fl;
  const RowMatrix cls = x.topRows(1);
  RowMatrix z = layer_norm(cls, P("final_ln.gamma"), P("final_ln.beta"), &fl);
  r.logit = z.row(0).dot(P("head.w").row(0)) + P("head.b")(0, 0);
  r.probability = sigmoid(r.logit);
  if (cache) {
    cache->final_ln = std::move(fl);
    cache->z = std::move(z);
  }
  return r;
}

double bce(double logit, int label) {
  // log(1 + e^z) - y z, computed stably.
  const double sp = logit > 0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
  return sp - label * logit;
}

}  // namespace

ForwardResult forward_window(const AttnModel& model, std::span<const int> window, const ForwardOptions& options) {
  return run_forward(model, window, options, nullptr);
}

double window_loss(const AttnModel& model, std::span<const int> window, int label, const ForwardOptions& options) {
  return bce(run_forward(model, window, options, nullptr).logit, label);
}

double loss_and_gradient(const AttnModel& model, std::span<const int> window, int label,
                         std::vector<double>& grad, const ForwardOptions& options) {
  if (options.mode == AttentionMode::kFull) throw ConfigError("gradients need local attention");
  const auto& cfg = model.config();
  grad.assign(model.params().size(), 0.0);
  Cache cache;
  const ForwardResult r = run_forward(model, window, options, &cache);
  const BlockViews P{model};
  auto G = [&](const std::string& name) { return model.view(model.block(name), grad); };
  const int n = static_cast<int>(r.ids.size());
  const int dh = cfg.d_head();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const double dlogit = r.probability - label;
  G("head.b")(0, 0) += dlogit;
  G("head.w").row(0) += dlogit * cache.z.row(0);
  RowMatrix dz = dlogit * P("head.w");
  RowMatrix dcls = layer_norm_backward(dz, cache.final_ln, P("final_ln.gamma"), G("final_ln.gamma"), G("final_ln.beta"));
  RowMatrix dx = RowMatrix::Zero(n, cfg.d_model);
  dx.row(0) = dcls.row(0);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerCache& c = cache.layers[static_cast<std::size_t>(l)];
    auto W = [&](const char* part) { return P(layer_name(l, part)); };
    auto GW = [&](const char* part) { return G(layer_name(l, part)); };

    // feed-forward branch
    RowMatrix df = dx;
    if (!c.drop2.empty()) apply_mask(df, c.drop2);
    GW("w2") += c.g.transpose() * df;
    GW("b2").row(0) += df.colwise().sum();
    RowMatrix du = df * W("w2").transpose();
    du.array() *= c.u.unaryExpr([](double u) { return gelu_grad(u); }).array();
    GW("w1") += c.c.transpose() * du;
    GW("b1").row(0) += du.colwise().sum();
    const RowMatrix dc = du * W("w1").transpose();
    RowMatrix dh_ = dx + layer_norm_backward(dc, c.ln2, W("ln2.gamma"), GW("ln2.gamma"), GW("ln2.beta"));

    // attention branch
    RowMatrix dout = dh_;
    if (!c.drop1.empty()) apply_mask(dout, c.drop1);
    GW("wo") += c.ctx.transpose() * dout;
    GW("bo").row(0) += dout.colwise().sum();
    const RowMatrix dctx = dout * W("wo").transpose();
    RowMatrix dq = RowMatrix::Zero(n, cfg.d_model), dk = dq, dv = dq;
    for (int h = 0; h < cfg.n_heads; ++h) {
      local_attention_backward(c.q.middleCols(h * dh, dh), c.k.middleCols(h * dh, dh), c.v.middleCols(h * dh, dh),
                               r.pattern, scale, r.probs[static_cast<std::size_t>(l * cfg.n_heads + h)],
                               dctx.middleCols(h * dh, dh), dq.middleCols(h * dh, dh), dk.middleCols(h * dh, dh),
                               dv.middleCols(h * dh, dh));
    }
    GW("wq") += c.a.transpose() * dq;
    GW("wk") += c.a.transpose() * dk;
    GW("wv") += c.a.transpose() * dv;
    GW("bq").row(0) += dq.colwise().sum();
    GW("bk").row(0) += dk.colwise().sum();
    GW("bv").row(0) += dv.colwise().sum();
    const RowMatrix da = dq * W("wq").transpose() + dk * W("wk").transpose() + dv * W("wv").transpose();
    dx = dh_ + layer_norm_backward(da, c.ln1, W("ln1.gamma"), GW("ln1.gamma"), GW("ln1.beta"));
  }

  auto demb = G("embedding");
  for (int i = 0; i < n; ++i) demb.row(r.ids[static_cast<std::size_t>(i)]) += dx.row(i);
  return bce(r.logit, label);
}

}  // namespace cogscreen::attn
