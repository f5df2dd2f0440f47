#pragma once

#include <map>
#include <utility>
#include <vector>

#include "fedchain/common.hpp"
#include "fedchain/traffic.hpp"

namespace fedchain::ml {

using LayerShape = std::pair<std::uint32_t, std::uint32_t>;  // (in_dim, out_dim)

/// Feed-forward autoencoder weights. Layout of `weights`: per layer, the
/// in_dim x out_dim weight matrix row-major, then out_dim biases; layers in
/// order. Hidden layers are tanh, the output layer is a logistic sigmoid.
struct ModelParameters {
    std::vector<LayerShape> layer_shapes;
    std::vector<double> weights;
    std::uint64_t version = 0;
    Hash32 param_hash{};
};

bool operator==(const ModelParameters& a, const ModelParameters& b);

std::size_t weight_count(const std::vector<LayerShape>& shapes);

/// Throws BadTopology unless consecutive layers chain (out of layer i equals
/// in of layer i+1) and the list is non-empty.
void validate_topology(const std::vector<LayerShape>& shapes);

/// True when the model maps the 18-feature vector onto itself.
bool is_feature_autoencoder(const ModelParameters& params);

struct TrainingConfig {
    double learning_rate = 0.05;
    std::uint32_t epochs = 1;
    std::uint32_t batch_size = 16;
    std::uint64_t seed = 0;
    double weight_decay = 0.0;  // optional L2 knob, off by default
};

struct AnomalyScore {
    double rmse = 0.0;
};

struct Threshold {
    double tau = 0.0;
    double quantile = 0.0;
    std::uint64_t calibration_count = 0;
};

enum class TrafficClass { Normal, Abnormal };

/// Glorot-uniform weights (r = sqrt(6/(in+out))), zero biases, version 0;
/// deterministic in the seed.
ModelParameters init_model(const std::vector<LayerShape>& shapes, std::uint64_t seed);

// Raw surface over plain vectors; dimensions are whatever the topology says.
// The reconstruction ops additionally require first-in == last-out.
std::vector<double> forward_vec(const ModelParameters& params, const std::vector<double>& input);
double loss_vec(const ModelParameters& params, const std::vector<std::vector<double>>& batch);
std::vector<double> gradient_vec(const ModelParameters& params,
                                 const std::vector<std::vector<double>>& batch);

// Typed surface over the 18-feature schema; inputs must be normalized.
traffic::FeatureVector forward(const ModelParameters& params, const traffic::FeatureVector& x);
double loss(const ModelParameters& params, const std::vector<traffic::FeatureVector>& batch);
std::vector<double> gradient(const ModelParameters& params,
                             const std::vector<traffic::FeatureVector>& batch);

struct TrainResult {
    ModelParameters params;
    std::uint64_t sample_count = 0;
    double final_loss = 0.0;
};

/// Mini-batch SGD; batch order reshuffled each epoch from config.seed.
/// Returned version is the input version plus one.
TrainResult train_local(const ModelParameters& params,
                        const std::vector<traffic::FeatureVector>& data,
                        const TrainingConfig& config);

AnomalyScore score(const ModelParameters& params, const traffic::FeatureVector& x);

/// Nearest-rank empirical quantile of reconstruction scores over a held-out
/// normal set: tau is the ceil(quantile * n)-th smallest score.
Threshold calibrate_threshold(const ModelParameters& params,
                              const std::vector<traffic::FeatureVector>& validation_normal,
                              double quantile);

/// Normal iff rmse <= tau (boundary inclusive).
TrafficClass classify(const AnomalyScore& s, const Threshold& t);

/// Canonical encoding: "FCM1", version u64 BE, layer count u32 BE, per layer
/// in/out u32 BE, weight count u64 BE, weights f64 BE. param_hash is the
/// SHA-256 of exactly these bytes.
Bytes serialize(const ModelParameters& params);
ModelParameters deserialize(const Bytes& bytes);
Hash32 param_hash_of(const ModelParameters& params);

/// Content-addressed store of serialized models, keyed by param_hash.
class ModelStore {
public:
    Hash32 put(Bytes model_bytes);
    const Bytes& get(const Hash32& hash) const;
    bool has(const Hash32& hash) const;
    const std::map<Hash32, Bytes>& entries() const { return entries_; }

private:
    std::map<Hash32, Bytes> entries_;
};

}  // namespace fedchain::ml
