#pragma once

// Template implementations for model.hpp. Instantiated with float for
// training/inference and with double where tests need tight numerics.

#include <algorithm>
#include <chrono>

namespace icot {

namespace detail {

inline constexpr double kLnEps = 1e-5;

template <typename S>
S gelu_value(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
}

template <typename S>
S gelu_slope(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x * S(M_SQRT1_2)));
  const S pdf = std::exp(S(-0.5) * x * x) * S(0.3989422804014326779);
  return cdf + x * pdf;
}

template <typename S>
struct LnCache {
  Mat<S> xhat;  // T x d, normalized rows before gain/bias
  Vec<S> rstd;  // T
};

template <typename S>
Mat<S> layer_norm_fwd(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, LnCache<S>& c) {
  const auto rows = x.rows();
  const auto cols = x.cols();
  c.xhat.resize(rows, cols);
  c.rstd.resize(rows);
  Mat<S> out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const S mu = x.row(i).mean();
    const S var = (x.row(i).array() - mu).square().mean();
    const S rstd = S(1) / std::sqrt(var + S(kLnEps));
    c.rstd(i) = rstd;
    c.xhat.row(i) = (x.row(i).array() - mu) * rstd;
    out.row(i) = c.xhat.row(i).array() * g.array() + b.array();
  }
  return out;
}

/// Returns dx; accumulates dg/db unless they are null.
template <typename S>
Mat<S> layer_norm_bwd(const Mat<S>& dy, const LnCache<S>& c, const Mat<S>& g, Mat<S>* dg,
                      Mat<S>* db) {
  const auto rows = dy.rows();
  const auto cols = dy.cols();
  if (dg) dg->array() += (dy.array() * c.xhat.array()).colwise().sum();
  if (db) db->array() += dy.array().colwise().sum();
  Mat<S> dx(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto dxhat = (dy.row(i).array() * g.array()).matrix();
    const S m1 = dxhat.mean();
    const S m2 = (dxhat.array() * c.xhat.row(i).array()).mean();
    dx.row(i) = ((dxhat.array() - m1) - c.xhat.row(i).array() * m2) * c.rstd(i);
  }
  return dx;
}

template <typename S>
struct LayerCache {
  Mat<S> x0;  // residual stream entering the layer
  LnCache<S> ln1c;
  Mat<S> a;        // ln1 output
  Mat<S> q, k, v;  // projections
  std::vector<Mat<S>> probs;  // per-head causal attention, T x T
  Mat<S> o;        // concatenated head outputs
  Mat<S> x1;       // after attention residual
  LnCache<S> ln2c;
  Mat<S> bn;  // ln2 output
  Mat<S> z;   // pre-activation
  Mat<S> h;   // activation output
  Mat<S> uq, uk, uv, uo;  // adapter intermediates x * A, T x rank
};

template <typename S>
struct FwdCache {
  std::vector<LayerCache<S>> layers;
  LnCache<S> lnfc;
  Mat<S> xf;
  Mat<S> logits;
};

/// y = x W (+ (x A) B * scale); u receives x A when the adapter is present.
template <typename S>
Mat<S> project_fwd(const Mat<S>& x, const Mat<S>& w, const LoraPair<S>* lora, S scale, Mat<S>& u) {
  Mat<S> y = x * w;
  if (lora) {
    u.noalias() = x * lora->a;
    y.noalias() += u * lora->b * scale;
  }
  return y;
}

/// Backward of project_fwd. Returns dx; accumulates weight gradients unless
/// skip_base / the adapter grads are absent.
template <typename S>
Mat<S> project_bwd(const Mat<S>& dy, const Mat<S>& x, const Mat<S>& w, const LoraPair<S>* lora,
                   S scale, const Mat<S>& u, Mat<S>* dw, LoraPair<S>* dlora) {
  Mat<S> dx = dy * w.transpose();
  if (dw) dw->noalias() += x.transpose() * dy;
  if (lora) {
    Mat<S> du = dy * lora->b.transpose() * scale;
    if (dlora) {
      dlora->b.noalias() += u.transpose() * dy * scale;
      dlora->a.noalias() += x.transpose() * du;
    }
    dx.noalias() += du * lora->a.transpose();
  }
  return dx;
}

template <typename S>
void check_tokens(const ModelParams<S>& p, const std::vector<int>& tokens) {
  if (tokens.empty()) throw DataError("model: empty token sequence");
  if (static_cast<int>(tokens.size()) > p.config.context_length)
    throw DataError("model: sequence of " + std::to_string(tokens.size()) +
                    " tokens overflows context length " +
                    std::to_string(p.config.context_length));
  for (int t : tokens)
    if (t < 0 || t >= p.config.vocab_size)
      throw DataError("model: token id " + std::to_string(t) + " outside vocabulary");
}

template <typename S>
Mat<S> forward_full(const ModelParams<S>& p, const std::vector<int>& tokens, FwdCache<S>& c) {
  check_tokens(p, tokens);
  const int T = static_cast<int>(tokens.size());
  const int d = p.config.model_dim;
  const int nh = p.config.num_heads;
  const int dh = p.config.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
  const S lscale = p.has_adapters ? static_cast<S>(p.adapter_config.scale()) : S(0);

  Mat<S> x(T, d);
  for (int i = 0; i < T; ++i) x.row(i) = p.embed.row(tokens[i]) + p.pos.row(i);

  c.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& lay = p.layers[l];
    const LayerAdapters<S>* ad = p.has_adapters ? &p.adapters[l] : nullptr;
    auto& lc = c.layers[l];
    lc.x0 = x;
    lc.a = layer_norm_fwd(lc.x0, lay.ln1_g, lay.ln1_b, lc.ln1c);
    lc.q = project_fwd(lc.a, lay.wq, ad ? &ad->q : nullptr, lscale, lc.uq);
    lc.k = project_fwd(lc.a, lay.wk, ad ? &ad->k : nullptr, lscale, lc.uk);
    lc.v = project_fwd(lc.a, lay.wv, ad ? &ad->v : nullptr, lscale, lc.uv);

    lc.probs.assign(nh, Mat<S>::Zero(T, T));
    lc.o.resize(T, d);
    for (int h = 0; h < nh; ++h) {
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      const auto vh = lc.v.middleCols(h * dh, dh);
      Mat<S> scores = qh * kh.transpose() * inv_sqrt_dh;
      auto& probs = lc.probs[h];
      for (int i = 0; i < T; ++i) {
        auto row = scores.row(i).head(i + 1);
        const S mx = row.maxCoeff();
        Eigen::Array<S, 1, Eigen::Dynamic> e = (row.array() - mx).exp();
        probs.row(i).head(i + 1) = e / e.sum();
      }
      lc.o.middleCols(h * dh, dh).noalias() = probs * vh;
    }
    Mat<S> attn = project_fwd(lc.o, lay.wo, ad ? &ad->o : nullptr, lscale, lc.uo);
    lc.x1 = lc.x0 + attn;

    lc.bn = layer_norm_fwd(lc.x1, lay.ln2_g, lay.ln2_b, lc.ln2c);
    lc.z = lc.bn * lay.w1;
    lc.z.array().rowwise() += lay.b1.array().row(0);
    lc.h = lc.z.unaryExpr([](S v) { return gelu_value(v); });
    Mat<S> f = lc.h * lay.w2;
    f.array().rowwise() += lay.b2.array().row(0);
    x = lc.x1 + f;
  }

  c.xf = layer_norm_fwd(x, p.lnf_g, p.lnf_b, c.lnfc);
  c.logits.noalias() = c.xf * p.unembed;
  return c.logits;
}

/// Accumulates (unscaled, sum-reduction) gradients for one example.
template <typename S>
void backward_full(const ModelParams<S>& p, const std::vector<int>& tokens, const FwdCache<S>& c,
                   const Mat<S>& dlogits, ModelParams<S>& g) {
  const int T = static_cast<int>(tokens.size());
  const int nh = p.config.num_heads;
  const int dh = p.config.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
  const S lscale = p.has_adapters ? static_cast<S>(p.adapter_config.scale()) : S(0);
  const bool train_base = !p.base_frozen;

  Mat<S> dxf = dlogits * p.unembed.transpose();
  if (train_base) g.unembed.noalias() += c.xf.transpose() * dlogits;
  Mat<S> dx = layer_norm_bwd(dxf, c.lnfc, p.lnf_g, train_base ? &g.lnf_g : nullptr,
                             train_base ? &g.lnf_b : nullptr);

  for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
    const auto& lay = p.layers[l];
    const auto& lc = c.layers[l];
    const LayerAdapters<S>* ad = p.has_adapters ? &p.adapters[l] : nullptr;
    LayerAdapters<S>* dad = p.has_adapters ? &g.adapters[l] : nullptr;
    auto& gl = g.layers[l];

    // feedforward block
    Mat<S> dh_act = dx * lay.w2.transpose();
    if (train_base) {
      gl.w2.noalias() += lc.h.transpose() * dx;
      gl.b2.array() += dx.array().colwise().sum();
    }
    Mat<S> dz =
        dh_act.array() * lc.z.unaryExpr([](S v) { return gelu_slope(v); }).array();
    Mat<S> dbn = dz * lay.w1.transpose();
    if (train_base) {
      gl.w1.noalias() += lc.bn.transpose() * dz;
      gl.b1.array() += dz.array().colwise().sum();
    }
    Mat<S> dx1 = dx + layer_norm_bwd(dbn, lc.ln2c, lay.ln2_g, train_base ? &gl.ln2_g : nullptr,
                                     train_base ? &gl.ln2_b : nullptr);

    // attention block
    Mat<S> dO = project_bwd(dx1, lc.o, lay.wo, ad ? &ad->o : nullptr, lscale, lc.uo,
                            train_base ? &gl.wo : nullptr, dad ? &dad->o : nullptr);
    Mat<S> dq(T, p.config.model_dim), dk(T, p.config.model_dim), dv(T, p.config.model_dim);
    for (int h = 0; h < nh; ++h) {
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      const auto vh = lc.v.middleCols(h * dh, dh);
      const auto dOh = dO.middleCols(h * dh, dh);
      const auto& probs = lc.probs[h];

      Mat<S> dP = dOh * vh.transpose();
      dv.middleCols(h * dh, dh).noalias() = probs.transpose() * dOh;
      // softmax backward; rows beyond the causal edge hold zero probability
      Vec<S> rowdot = (probs.array() * dP.array()).rowwise().sum();
      Mat<S> dS =
          (probs.array() * (dP.array().colwise() - rowdot.array())).matrix() * inv_sqrt_dh;
      dq.middleCols(h * dh, dh).noalias() = dS * kh;
      dk.middleCols(h * dh, dh).noalias() = dS.transpose() * qh;
    }
    Mat<S> da = project_bwd(dq, lc.a, lay.wq, ad ? &ad->q : nullptr, lscale, lc.uq,
                            train_base ? &gl.wq : nullptr, dad ? &dad->q : nullptr);
    da += project_bwd(dk, lc.a, lay.wk, ad ? &ad->k : nullptr, lscale, lc.uk,
                      train_base ? &gl.wk : nullptr, dad ? &dad->k : nullptr);
    da += project_bwd(dv, lc.a, lay.wv, ad ? &ad->v : nullptr, lscale, lc.uv,
                      train_base ? &gl.wv : nullptr, dad ? &dad->v : nullptr);
    dx = dx1 + layer_norm_bwd(da, lc.ln1c, lay.ln1_g, train_base ? &gl.ln1_g : nullptr,
                              train_base ? &gl.ln1_b : nullptr);
  }

  if (train_base) {
    for (int i = 0; i < T; ++i) {
      g.embed.row(tokens[i]) += dx.row(i);
      g.pos.row(i) += dx.row(i);
    }
  }
}

/// Sum of -log softmax(logits)[target] over masked rows; writes the matching
/// (unscaled) dlogits when requested.
template <typename S>
double masked_nll(const Mat<S>& logits, const std::vector<int>& targets,
                  const std::vector<bool>& mask, Mat<S>* dlogits, std::size_t& count) {
  double nll = 0.0;
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    ++count;
    const S mx = logits.row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (logits.row(i).array() - mx).exp();
    const S denom = e.sum();
    const int y = targets[static_cast<std::size_t>(i)];
    nll += -static_cast<double>(logits(i, y) - mx - std::log(denom));
    if (dlogits) {
      dlogits->row(i) = (e / denom).matrix();
      (*dlogits)(i, y) -= S(1);
    }
  }
  return nll;
}

template <typename S>
void check_example(const ModelParams<S>& p, const BatchExample& ex) {
  if (ex.inputs.size() != ex.targets.size() || ex.inputs.size() != ex.mask.size())
    throw DataError("loss: inputs/targets/mask length mismatch");
  check_tokens(p, ex.inputs);
  for (int t : ex.targets)
    if (t < 0 || t >= p.config.vocab_size)
      throw DataError("loss: target id " + std::to_string(t) + " outside vocabulary");
}

}  // namespace detail

template <typename S>
ModelParams<S> init_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams<S> p;
  p.config = cfg;
  const int d = cfg.model_dim;
  const int ff = cfg.feedforward_dim;
  p.embed.resize(cfg.vocab_size, d);
  p.pos.resize(cfg.context_length, d);
  p.layers.resize(static_cast<std::size_t>(cfg.num_layers));
  for (auto& lay : p.layers) {
    lay.ln1_g.resize(1, d);
    lay.ln1_b.resize(1, d);
    lay.wq.resize(d, d);
    lay.wk.resize(d, d);
    lay.wv.resize(d, d);
    lay.wo.resize(d, d);
    lay.ln2_g.resize(1, d);
    lay.ln2_b.resize(1, d);
    lay.w1.resize(d, ff);
    lay.b1.resize(1, ff);
    lay.w2.resize(ff, d);
    lay.b2.resize(1, d);
  }
  p.lnf_g.resize(1, d);
  p.lnf_b.resize(1, d);
  p.unembed.resize(d, cfg.vocab_size);

  Rng rng(cfg.seed);
  const double base_std = 0.02;
  const double resid_std = base_std / std::sqrt(2.0 * cfg.num_layers);
  for_each_tensor(p, [&](const std::string& name, Mat<S>& m) {
    const bool is_gain = name.ends_with("_g");
    const bool is_bias = name.ends_with("_b") || name.ends_with("b1") || name.ends_with("b2");
    if (is_gain) {
      m.setConstant(S(1));
      return;
    }
    if (is_bias) {
      m.setZero();
      return;
    }
    const bool is_resid_out = name.ends_with(".wo") || name.ends_with(".w2");
    const double std = is_resid_out ? resid_std : base_std;
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = static_cast<S>(rng.normal() * std);
  });
  return p;
}

template <typename S>
Mat<S> forward_logprobs(const ModelParams<S>& params, const std::vector<int>& tokens) {
  detail::FwdCache<S> cache;
  Mat<S> logits = detail::forward_full(params, tokens, cache);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const S mx = logits.row(i).maxCoeff();
    const S lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    logits.row(i).array() -= lse;
  }
  return logits;
}

template <typename S>
double loss(const ModelParams<S>& params, const std::vector<BatchExample>& batch) {
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& ex : batch) {
    detail::check_example(params, ex);
    detail::FwdCache<S> cache;
    const Mat<S> logits = detail::forward_full(params, ex.inputs, cache);
    nll += detail::masked_nll<S>(logits, ex.targets, ex.mask, nullptr, count);
  }
  if (count == 0) throw DataError("loss: no supervised positions in batch");
  return nll / static_cast<double>(count);
}

template <typename S>
double loss_and_grad(const ModelParams<S>& params, const std::vector<BatchExample>& batch,
                     ModelParams<S>& grads) {
  for_each_tensor(grads, [](const std::string&, Mat<S>& m) { m.setZero(); });
  double nll = 0.0;
  std::size_t count = 0;
  std::vector<std::pair<detail::FwdCache<S>, Mat<S>>> pending;  // cache + dlogits
  pending.reserve(batch.size());
  for (const auto& ex : batch) {
    detail::check_example(params, ex);
    detail::FwdCache<S> cache;
    const Mat<S> logits = detail::forward_full(params, ex.inputs, cache);
    Mat<S> dlogits;
    nll += detail::masked_nll<S>(logits, ex.targets, ex.mask, &dlogits, count);
    pending.emplace_back(std::move(cache), std::move(dlogits));
  }
  if (count == 0) throw DataError("loss: no supervised positions in batch");
  const S w = S(1) / static_cast<S>(count);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    pending[i].second *= w;
    detail::backward_full(params, batch[i].inputs, pending[i].first, pending[i].second, grads);
  }
  return nll / static_cast<double>(count);
}

template <typename S>
void attach_adapters(ModelParams<S>& params, const AdapterConfig& acfg) {
  acfg.validate();
  if (params.has_adapters) throw StateError("attach_adapters: adapters already attached");
  if (!params.base_frozen)
    throw StateError("attach_adapters: freeze the base parameters first");
  const int d = params.config.model_dim;
  params.adapter_config = acfg;
  params.adapters.resize(params.layers.size());
  Rng rng(params.config.seed ^ 0x9E3779B97F4A7C15ull);
  for (auto& ad : params.adapters) {
    for (LoraPair<S>* pair : {&ad.q, &ad.k, &ad.v, &ad.o}) {
      pair->a.resize(d, acfg.rank);
      for (Eigen::Index i = 0; i < pair->a.size(); ++i)
        pair->a.data()[i] = static_cast<S>(rng.normal() * 0.02);
      pair->b = Mat<S>::Zero(acfg.rank, d);
    }
  }
  params.has_adapters = true;
}

template <typename S>
void AdamW<S>::step(ModelParams<S>& params, ModelParams<S>& grads, const AdamWConfig& cfg) {
  ++step_;
  const S bc1 = S(1) - static_cast<S>(std::pow(cfg.beta1, static_cast<double>(step_)));
  const S bc2 = S(1) - static_cast<S>(std::pow(cfg.beta2, static_cast<double>(step_)));
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  const S lr = static_cast<S>(cfg.lr), eps = static_cast<S>(cfg.eps);
  const S wd = static_cast<S>(cfg.weight_decay);

  auto pr = trainable_refs(params);
  auto gr = trainable_refs(grads);
  auto mr = trainable_refs(m_);
  auto vr = trainable_refs(v_);
  for (std::size_t i = 0; i < pr.size(); ++i) {
    auto& p = *pr[i].second;
    auto& g = *gr[i].second;
    auto& m = *mr[i].second;
    auto& v = *vr[i].second;
    m = b1 * m + (S(1) - b1) * g;
    v.array() = b2 * v.array() + (S(1) - b2) * g.array().square();
    p.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + eps) + wd * p.array());
  }
}

template <typename S>
void AdamW<S>::reset() {
  for_each_tensor(m_, [](const std::string&, Mat<S>& m) { m.setZero(); });
  for_each_tensor(v_, [](const std::string&, Mat<S>& m) { m.setZero(); });
  step_ = 0;
}

template <typename S>
double AdamW<S>::second_moment_norm() const {
  double total = 0.0;
  for_each_tensor(const_cast<ModelParams<S>&>(v_), [&](const std::string&, Mat<S>& m) {
    total += static_cast<double>(m.template cast<double>().squaredNorm());
  });
  return std::sqrt(total);
}

template <typename S>
Decoder<S>::Decoder(const ModelParams<S>& params) : p_(params) {
  k_.assign(p_.layers.size(), Mat<S>(p_.config.context_length, p_.config.model_dim));
  v_.assign(p_.layers.size(), Mat<S>(p_.config.context_length, p_.config.model_dim));
}

template <typename S>
Vec<S> Decoder<S>::feed(int token) {
  if (len_ >= p_.config.context_length) throw DataError("decoder: context length exhausted");
  if (token < 0 || token >= p_.config.vocab_size)
    throw DataError("decoder: token id " + std::to_string(token) + " outside vocabulary");
  const int d = p_.config.model_dim;
  const int nh = p_.config.num_heads;
  const int dh = p_.config.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
  const S lscale = p_.has_adapters ? static_cast<S>(p_.adapter_config.scale()) : S(0);

  Mat<S> x = p_.embed.row(token) + p_.pos.row(len_);  // 1 x d
  detail::LnCache<S> lnc;
  Mat<S> u;
  for (std::size_t l = 0; l < p_.layers.size(); ++l) {
    const auto& lay = p_.layers[l];
    const LayerAdapters<S>* ad = p_.has_adapters ? &p_.adapters[l] : nullptr;
    Mat<S> a = detail::layer_norm_fwd(x, lay.ln1_g, lay.ln1_b, lnc);
    Mat<S> q = detail::project_fwd(a, lay.wq, ad ? &ad->q : nullptr, lscale, u);
    k_[l].row(len_) = detail::project_fwd(a, lay.wk, ad ? &ad->k : nullptr, lscale, u);
    v_[l].row(len_) = detail::project_fwd(a, lay.wv, ad ? &ad->v : nullptr, lscale, u);

    Mat<S> o(1, d);
    const int n = len_ + 1;
    for (int h = 0; h < nh; ++h) {
      const auto kh = k_[l].middleCols(h * dh, dh).topRows(n);
      const auto vh = v_[l].middleCols(h * dh, dh).topRows(n);
      Vec<S> scores = kh * q.middleCols(h * dh, dh).transpose() * inv_sqrt_dh;
      const S mx = scores.maxCoeff();
      Eigen::Array<S, Eigen::Dynamic, 1> e = (scores.array() - mx).exp();
      e /= e.sum();
      o.middleCols(h * dh, dh).noalias() = e.matrix().transpose() * vh;
    }
    x.noalias() += detail::project_fwd(o, lay.wo, ad ? &ad->o : nullptr, lscale, u);

    Mat<S> bn = detail::layer_norm_fwd(x, lay.ln2_g, lay.ln2_b, lnc);
    Mat<S> z = bn * lay.w1 + lay.b1;
    Mat<S> hact = z.unaryExpr([](S vv) { return detail::gelu_value(vv); });
    x.noalias() += hact * lay.w2;
    x += lay.b2;
  }
  Mat<S> xf = detail::layer_norm_fwd(x, p_.lnf_g, p_.lnf_b, lnc);
  Vec<S> logits = (xf * p_.unembed).transpose();
  ++len_;
  return logits;
}

namespace detail {

/// First index of the strictly largest coefficient; deterministic tie-break.
template <typename S>
int argmax_first(const Vec<S>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

template <typename S>
int sample_logits(const Vec<S>& logits, double temperature, Rng& rng) {
  const double t = temperature > 0 ? temperature : 1.0;
  Eigen::ArrayXd a = logits.template cast<double>().array() / t;
  a -= a.maxCoeff();
  Eigen::ArrayXd probs = a.exp();
  probs /= probs.sum();
  double u = rng.uniform();
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    u -= probs(i);
    if (u <= 0) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

}  // namespace detail

template <typename S>
GenerateResult generate(const ModelParams<S>& params, const std::vector<int>& prefix,
                        const GenerateOptions& opt) {
  detail::check_tokens(params, prefix);
  if (!opt.greedy && opt.rng == nullptr)
    throw ConfigError("generate: sampling requires an rng");

  using Clock = std::chrono::steady_clock;
  GenerateResult result;
  if (opt.eos_id >= 0 && prefix.back() == opt.eos_id) return result;

  Decoder<S> dec(params);
  Vec<S> logits;
  Clock::time_point start{};
  bool clock_running = false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    logits = dec.feed(prefix[i]);
    if (static_cast<int>(i) == opt.clock_from) {
      start = Clock::now();
      clock_running = true;
    }
  }
  if (!clock_running) start = Clock::now();

  const auto is_audio = [&](int id) {
    return opt.audio_id_begin >= 0 && id >= opt.audio_id_begin && id < opt.audio_id_end;
  };
  while (true) {
    const int next = opt.greedy ? detail::argmax_first(logits)
                                : detail::sample_logits(logits, opt.temperature, *opt.rng);
    result.tokens.push_back(next);
    if (result.steps_to_first_audio < 0 && is_audio(next)) {
      result.steps_to_first_audio = static_cast<int>(result.tokens.size()) - 1;
      result.seconds_to_first_audio =
          std::chrono::duration<double>(Clock::now() - start).count();
    }
    if (opt.eos_id >= 0 && next == opt.eos_id) break;
    if (static_cast<int>(result.tokens.size()) >= opt.max_new_tokens) {
      result.truncated = true;
      break;
    }
    if (dec.position() >= params.config.context_length) {
      result.truncated = true;
      break;
    }
    logits = dec.feed(next);
  }
  result.seconds_total = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

}  // namespace icot
