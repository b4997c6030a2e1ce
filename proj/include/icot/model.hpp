#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "icot/errors.hpp"
#include "icot/rng.hpp"

namespace icot {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Decoder-only transformer dimensions.
struct ModelConfig {
  int vocab_size = 0;
  int context_length = 512;
  int num_layers = 4;
  int num_heads = 4;
  int model_dim = 128;
  int feedforward_dim = 512;
  std::uint64_t seed = 0;

  void validate() const;
  int head_dim() const { return model_dim / num_heads; }
};

/// Total trainable scalars of the base network, in closed form.
std::int64_t param_count(const ModelConfig& cfg);

/// Low-rank adapter settings. Adapters attach to the four attention
/// projections of every layer.
struct AdapterConfig {
  int rank = 32;
  double alpha = 32.0;

  void validate() const;
  double scale() const { return alpha / static_cast<double>(rank); }
};

std::int64_t adapter_param_count(const ModelConfig& cfg, const AdapterConfig& acfg);

template <typename S>
struct LayerParams {
  Mat<S> ln1_g, ln1_b;      // 1 x d
  Mat<S> wq, wk, wv, wo;    // d x d
  Mat<S> ln2_g, ln2_b;      // 1 x d
  Mat<S> w1, b1;            // d x ff, 1 x ff
  Mat<S> w2, b2;            // ff x d, 1 x d
};

template <typename S>
struct LoraPair {
  Mat<S> a;  // d x rank
  Mat<S> b;  // rank x d, zero at attach so the adapter starts as a no-op
};

template <typename S>
struct LayerAdapters {
  LoraPair<S> q, k, v, o;
};

template <typename S>
struct ModelParams {
  ModelConfig config;
  Mat<S> embed;    // vocab x d
  Mat<S> pos;      // ctx x d
  std::vector<LayerParams<S>> layers;
  Mat<S> lnf_g, lnf_b;  // 1 x d
  Mat<S> unembed;       // d x vocab

  bool base_frozen = false;
  bool has_adapters = false;
  AdapterConfig adapter_config;
  std::vector<LayerAdapters<S>> adapters;
};

/// Visits every tensor as (name, matrix). Order is fixed and is the
/// serialization order of checkpoints.
template <typename S, typename F>
void for_each_tensor(ModelParams<S>& p, F&& f) {
  f("embed", p.embed);
  f("pos", p.pos);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    auto& lay = p.layers[l];
    f(pre + "ln1_g", lay.ln1_g);
    f(pre + "ln1_b", lay.ln1_b);
    f(pre + "wq", lay.wq);
    f(pre + "wk", lay.wk);
    f(pre + "wv", lay.wv);
    f(pre + "wo", lay.wo);
    f(pre + "ln2_g", lay.ln2_g);
    f(pre + "ln2_b", lay.ln2_b);
    f(pre + "w1", lay.w1);
    f(pre + "b1", lay.b1);
    f(pre + "w2", lay.w2);
    f(pre + "b2", lay.b2);
  }
  f("lnf_g", p.lnf_g);
  f("lnf_b", p.lnf_b);
  f("unembed", p.unembed);
  for (std::size_t l = 0; l < p.adapters.size(); ++l) {
    const std::string pre = "adapters." + std::to_string(l) + ".";
    auto& ad = p.adapters[l];
    f(pre + "q.a", ad.q.a);
    f(pre + "q.b", ad.q.b);
    f(pre + "k.a", ad.k.a);
    f(pre + "k.b", ad.k.b);
    f(pre + "v.a", ad.v.a);
    f(pre + "v.b", ad.v.b);
    f(pre + "o.a", ad.o.a);
    f(pre + "o.b", ad.o.b);
  }
}

template <typename S>
std::vector<std::pair<std::string, Mat<S>*>> tensor_refs(ModelParams<S>& p) {
  std::vector<std::pair<std::string, Mat<S>*>> refs;
  for_each_tensor(p, [&](const std::string& name, Mat<S>& m) { refs.emplace_back(name, &m); });
  return refs;
}

/// Tensors the optimizer may update: the adapters when the base is frozen,
/// the whole base otherwise.
template <typename S>
std::vector<std::pair<std::string, Mat<S>*>> trainable_refs(ModelParams<S>& p) {
  std::vector<std::pair<std::string, Mat<S>*>> refs;
  for_each_tensor(p, [&](const std::string& name, Mat<S>& m) {
    const bool is_adapter = name.rfind("adapters.", 0) == 0;
    if (p.base_frozen ? is_adapter : !is_adapter) refs.emplace_back(name, &m);
  });
  return refs;
}

template <typename S>
std::int64_t count_parameters(const ModelParams<S>& p) {
  std::int64_t n = 0;
  for_each_tensor(const_cast<ModelParams<S>&>(p),
                  [&](const std::string&, Mat<S>& m) { n += m.size(); });
  return n;
}

/// Same structure as params with every tensor zeroed; gradient accumulator.
template <typename S>
ModelParams<S> zeros_like(const ModelParams<S>& p) {
  ModelParams<S> z = p;
  for_each_tensor(z, [](const std::string&, Mat<S>& m) { m.setZero(); });
  return z;
}

/// Deterministic initialization: weights from N(0, 0.02^2) (residual output
/// projections scaled down by 1/sqrt(2 * num_layers)), layer-norm gains 1,
/// all biases 0.
template <typename S>
ModelParams<S> init_model(const ModelConfig& cfg);

/// One training example in next-token-prediction form.
struct BatchExample {
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<bool> mask;
};

/// Per-position next-token log-probabilities, rows normalized. Causal:
/// position i depends only on tokens 0..i.
template <typename S>
Mat<S> forward_logprobs(const ModelParams<S>& params, const std::vector<int>& tokens);

/// Mean negative log-likelihood over mask-true positions of the batch.
/// Throws DataError when no position in the batch is supervised.
template <typename S>
double loss(const ModelParams<S>& params, const std::vector<BatchExample>& batch);

/// Loss plus gradients for every trainable tensor (frozen tensors get exact
/// zeros). grads must be zeros_like(params)-shaped; it is overwritten.
template <typename S>
double loss_and_grad(const ModelParams<S>& params, const std::vector<BatchExample>& batch,
                     ModelParams<S>& grads);

/// Adds zero-initialized low-rank adapters to the attention projections and
/// freezes everything else. The forward pass is unchanged at attach time.
template <typename S>
void attach_adapters(ModelParams<S>& params, const AdapterConfig& acfg);

/// Decoupled weight-decay Adam. Moments are kept per trainable tensor; reset
/// zeroes them and the step count.
struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <typename S>
class AdamW {
public:
  explicit AdamW(const ModelParams<S>& params)
      : m_(zeros_like(params)), v_(zeros_like(params)) {}

  void step(ModelParams<S>& params, ModelParams<S>& grads, const AdamWConfig& cfg);
  void reset();

  std::int64_t step_count() const { return step_; }
  /// Frobenius norm over all second moments; drops to 0 at each reset.
  double second_moment_norm() const;

  ModelParams<S>& moments_m() { return m_; }
  ModelParams<S>& moments_v() { return v_; }
  void set_step_count(std::int64_t s) { step_ = s; }

private:
  ModelParams<S> m_, v_;
  std::int64_t step_ = 0;
};

/// Incremental decoder with per-layer key/value caches. Feeding a token
/// returns the logits row predicting the next token.
template <typename S>
class Decoder {
public:
  explicit Decoder(const ModelParams<S>& params);

  /// Number of tokens consumed so far.
  int position() const { return len_; }

  /// Throws DataError once the context is full.
  Vec<S> feed(int token);

private:
  const ModelParams<S>& p_;
  std::vector<Mat<S>> k_, v_;  // ctx x d per layer
  int len_ = 0;
};

struct GenerateOptions {
  int max_new_tokens = 256;
  int eos_id = -1;
  bool greedy = true;
  double temperature = 1.0;
  Rng* rng = nullptr;       // used only when greedy is false
  int audio_id_begin = -1;  // audio block [begin, end) for first-audio stats
  int audio_id_end = -1;
  int clock_from = -1;  // prefix index whose processing starts the latency clock
};

struct GenerateResult {
  std::vector<int> tokens;  // continuation only, including <eos> when reached
  bool truncated = false;
  int steps_to_first_audio = -1;  // index within tokens, -1 when never emitted
  double seconds_to_first_audio = -1.0;
  double seconds_total = 0.0;
};

/// Autoregressive continuation with cached attention state. Stops at eos or
/// the token budget; hitting the budget flags the result truncated. A prefix
/// already ending in eos yields an empty continuation.
template <typename S>
GenerateResult generate(const ModelParams<S>& params, const std::vector<int>& prefix,
                        const GenerateOptions& opt);

}  // namespace icot

#include "icot/model_impl.hpp"
