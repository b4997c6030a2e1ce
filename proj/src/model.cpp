#include "icot/model.hpp"

namespace icot {

void ModelConfig::validate() const {
  if (vocab_size < 1) throw ConfigError("model: vocab_size must be positive");
  if (context_length < 1) throw ConfigError("model: context_length must be positive");
  if (num_layers < 1) throw ConfigError("model: num_layers must be positive");
  if (num_heads < 1) throw ConfigError("model: num_heads must be positive");
  if (model_dim < 1) throw ConfigError("model: model_dim must be positive");
  if (feedforward_dim < 1) throw ConfigError("model: feedforward_dim must be positive");
  if (model_dim % num_heads != 0)
    throw ConfigError("model: model_dim must be divisible by num_heads");
}

std::int64_t param_count(const ModelConfig& cfg) {
  const std::int64_t v = cfg.vocab_size, d = cfg.model_dim, ff = cfg.feedforward_dim;
  const std::int64_t per_layer = 4 * d * d   // attention projections
                                 + 2 * d * ff + ff + d  // feedforward with biases
                                 + 4 * d;               // two layer norms
  return v * d                       // embedding
         + cfg.context_length * d    // positions
         + cfg.num_layers * per_layer
         + 2 * d      // final norm
         + d * v;     // unembedding
}

void AdapterConfig::validate() const {
  if (rank < 1) throw ConfigError("adapter: rank must be at least 1");
  if (!(alpha > 0.0)) throw ConfigError("adapter: alpha must be positive");
}

std::int64_t adapter_param_count(const ModelConfig& cfg, const AdapterConfig& acfg) {
  // Four adapted projections per layer, each a d x rank plus rank x d factor.
  return static_cast<std::int64_t>(cfg.num_layers) * 4 * 2 * acfg.rank * cfg.model_dim;
}

}  // namespace icot
