#include "fedchain/ml.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "fedchain/keys.hpp"
#include "fedchain/rng.hpp"

namespace fedchain::ml {

bool operator==(const ModelParameters& a, const ModelParameters& b) {
    return a.layer_shapes == b.layer_shapes && a.weights == b.weights && a.version == b.version;
}

std::size_t weight_count(const std::vector<LayerShape>& shapes) {
    std::size_t total = 0;
    for (const auto& [in, out] : shapes) {
        total += static_cast<std::size_t>(in) * out + out;
    }
    return total;
}

void validate_topology(const std::vector<LayerShape>& shapes) {
    if (shapes.empty()) {
        throw Error(Errc::BadTopology, "no layers");
    }
    for (const auto& [in, out] : shapes) {
        if (in == 0 || out == 0) {
            throw Error(Errc::BadTopology, "zero-width layer");
        }
    }
    for (std::size_t i = 0; i + 1 < shapes.size(); ++i) {
        if (shapes[i].second != shapes[i + 1].first) {
            throw Error(Errc::BadTopology, "layer " + std::to_string(i) + " output " +
                                               std::to_string(shapes[i].second) +
                                               " does not feed layer " + std::to_string(i + 1));
        }
    }
}

bool is_feature_autoencoder(const ModelParameters& params) {
    return !params.layer_shapes.empty() &&
           params.layer_shapes.front().first == traffic::feature_count &&
           params.layer_shapes.back().second == traffic::feature_count;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void refresh_hash(ModelParameters& params) { params.param_hash = param_hash_of(params); }

struct ForwardPass {
    // activations[0] is the input; activations[l+1] the output of layer l
    std::vector<std::vector<double>> activations;
};

ForwardPass run_forward(const ModelParameters& params, const std::vector<double>& input) {
    ForwardPass pass;
    pass.activations.reserve(params.layer_shapes.size() + 1);
    pass.activations.push_back(input);
    std::size_t offset = 0;
    for (std::size_t l = 0; l < params.layer_shapes.size(); ++l) {
        const auto [in, out] = params.layer_shapes[l];
        const bool is_output_layer = (l + 1 == params.layer_shapes.size());
        const double* w = params.weights.data() + offset;
        const double* b = w + static_cast<std::size_t>(in) * out;
        const auto& x = pass.activations.back();
        std::vector<double> a(out);
        for (std::uint32_t j = 0; j < out; ++j) {
            double z = b[j];
            for (std::uint32_t i = 0; i < in; ++i) {
                z += x[i] * w[static_cast<std::size_t>(i) * out + j];
            }
            a[j] = is_output_layer ? sigmoid(z) : std::tanh(z);
        }
        pass.activations.push_back(std::move(a));
        offset += static_cast<std::size_t>(in) * out + out;
    }
    return pass;
}

void check_reconstruction_topology(const ModelParameters& params) {
    validate_topology(params.layer_shapes);
    if (params.layer_shapes.front().first != params.layer_shapes.back().second) {
        throw Error(Errc::BadTopology, "reconstruction requires matching input/output widths");
    }
}

double sample_mse(const std::vector<double>& x, const std::vector<double>& reconstruction) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = reconstruction[i] - x[i];
        acc += d * d;
    }
    return acc / static_cast<double>(x.size());
}

// Accumulates the gradient of this sample's MSE into grad (not yet divided
// by the batch size).
void accumulate_sample_gradient(const ModelParameters& params, const std::vector<double>& x,
                                std::vector<double>& grad) {
    ForwardPass pass = run_forward(params, x);
    const std::size_t layer_total = params.layer_shapes.size();
    const std::size_t dim = x.size();

    // delta for the current layer's pre-activations, built backwards
    const auto& reconstruction = pass.activations.back();
    std::vector<double> delta(reconstruction.size());
    for (std::size_t j = 0; j < reconstruction.size(); ++j) {
        double y = reconstruction[j];
        delta[j] = (2.0 / static_cast<double>(dim)) * (y - x[j]) * y * (1.0 - y);
    }

    // per-layer weight offsets
    std::vector<std::size_t> offsets(layer_total);
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layer_total; ++l) {
        offsets[l] = offset;
        offset += static_cast<std::size_t>(params.layer_shapes[l].first) *
                      params.layer_shapes[l].second +
                  params.layer_shapes[l].second;
    }

    for (std::size_t l = layer_total; l-- > 0;) {
        const auto [in, out] = params.layer_shapes[l];
        const auto& a_prev = pass.activations[l];
        double* gw = grad.data() + offsets[l];
        double* gb = gw + static_cast<std::size_t>(in) * out;
        for (std::uint32_t i = 0; i < in; ++i) {
            for (std::uint32_t j = 0; j < out; ++j) {
                gw[static_cast<std::size_t>(i) * out + j] += a_prev[i] * delta[j];
            }
        }
        for (std::uint32_t j = 0; j < out; ++j) {
            gb[j] += delta[j];
        }
        if (l == 0) break;
        const double* w = params.weights.data() + offsets[l];
        std::vector<double> delta_prev(in, 0.0);
        for (std::uint32_t i = 0; i < in; ++i) {
            double acc = 0.0;
            for (std::uint32_t j = 0; j < out; ++j) {
                acc += w[static_cast<std::size_t>(i) * out + j] * delta[j];
            }
            // tanh'(z) = 1 - a^2
            double a = pass.activations[l][i];
            delta_prev[i] = acc * (1.0 - a * a);
        }
        delta = std::move(delta_prev);
    }
}

std::vector<double> unwrap(const traffic::FeatureVector& x) {
    if (!x.normalized) {
        throw Error(Errc::UnnormalizedInput, "feature vector must be normalized");
    }
    return std::vector<double>(x.values.begin(), x.values.end());
}

std::vector<std::vector<double>> unwrap_batch(const std::vector<traffic::FeatureVector>& batch) {
    std::vector<std::vector<double>> out;
    out.reserve(batch.size());
    for (const auto& x : batch) out.push_back(unwrap(x));
    return out;
}

}  // namespace

ModelParameters init_model(const std::vector<LayerShape>& shapes, std::uint64_t seed) {
    validate_topology(shapes);
    ModelParameters params;
    params.layer_shapes = shapes;
    params.weights.assign(weight_count(shapes), 0.0);
    params.version = 0;
    DeterministicRng rng(seed);
    std::size_t offset = 0;
    for (const auto& [in, out] : shapes) {
        double r = std::sqrt(6.0 / (static_cast<double>(in) + out));
        for (std::size_t k = 0; k < static_cast<std::size_t>(in) * out; ++k) {
            params.weights[offset + k] = rng.uniform(-r, r);
        }
        offset += static_cast<std::size_t>(in) * out + out;  // biases stay 0
    }
    refresh_hash(params);
    return params;
}

std::vector<double> forward_vec(const ModelParameters& params, const std::vector<double>& input) {
    validate_topology(params.layer_shapes);
    if (input.size() != params.layer_shapes.front().first) {
        throw Error(Errc::BadTopology, "input width does not match first layer");
    }
    return run_forward(params, input).activations.back();
}

double loss_vec(const ModelParameters& params, const std::vector<std::vector<double>>& batch) {
    if (batch.empty()) {
        throw Error(Errc::EmptyDataset, "loss over empty batch");
    }
    check_reconstruction_topology(params);
    double acc = 0.0;
    for (const auto& x : batch) {
        acc += sample_mse(x, forward_vec(params, x));
    }
    return acc / static_cast<double>(batch.size());
}

std::vector<double> gradient_vec(const ModelParameters& params,
                                 const std::vector<std::vector<double>>& batch) {
    if (batch.empty()) {
        throw Error(Errc::EmptyDataset, "gradient over empty batch");
    }
    check_reconstruction_topology(params);
    std::vector<double> grad(params.weights.size(), 0.0);
    for (const auto& x : batch) {
        accumulate_sample_gradient(params, x, grad);
    }
    double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& g : grad) g *= inv;
    return grad;
}

traffic::FeatureVector forward(const ModelParameters& params, const traffic::FeatureVector& x) {
    if (!is_feature_autoencoder(params)) {
        throw Error(Errc::BadTopology, "model is not an 18-feature autoencoder");
    }
    auto out = forward_vec(params, unwrap(x));
    traffic::FeatureVector result;
    std::copy(out.begin(), out.end(), result.values.begin());
    result.normalized = true;
    return result;
}

double loss(const ModelParameters& params, const std::vector<traffic::FeatureVector>& batch) {
    return loss_vec(params, unwrap_batch(batch));
}

std::vector<double> gradient(const ModelParameters& params,
                             const std::vector<traffic::FeatureVector>& batch) {
    return gradient_vec(params, unwrap_batch(batch));
}

TrainResult train_local(const ModelParameters& params,
                        const std::vector<traffic::FeatureVector>& data,
                        const TrainingConfig& config) {
    if (data.empty()) {
        throw Error(Errc::EmptyDataset, "training data is empty");
    }
    if (config.learning_rate < 0.0 || config.epochs < 1 || config.batch_size < 1) {
        throw Error(Errc::ConfigError, "invalid training config");
    }
    check_reconstruction_topology(params);
    auto samples = unwrap_batch(data);

    ModelParameters current = params;
    DeterministicRng rng(config.seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t stop = std::min(order.size(), start + config.batch_size);
            std::vector<double> grad(current.weights.size(), 0.0);
            for (std::size_t k = start; k < stop; ++k) {
                accumulate_sample_gradient(current, samples[order[k]], grad);
            }
            double inv = 1.0 / static_cast<double>(stop - start);
            for (std::size_t w = 0; w < current.weights.size(); ++w) {
                double g = grad[w] * inv;
                if (config.weight_decay != 0.0) {
                    g += config.weight_decay * current.weights[w];
                }
                current.weights[w] -= config.learning_rate * g;
            }
        }
    }

    TrainResult result;
    result.sample_count = samples.size();
    result.final_loss = loss_vec(current, samples);
    current.version = params.version + 1;
    refresh_hash(current);
    result.params = std::move(current);
    return result;
}

AnomalyScore score(const ModelParameters& params, const traffic::FeatureVector& x) {
    traffic::FeatureVector reconstruction = forward(params, x);
    double acc = 0.0;
    for (std::size_t i = 0; i < traffic::feature_count; ++i) {
        double d = x.values[i] - reconstruction.values[i];
        acc += d * d;
    }
    return AnomalyScore{std::sqrt(acc / static_cast<double>(traffic::feature_count))};
}

Threshold calibrate_threshold(const ModelParameters& params,
                              const std::vector<traffic::FeatureVector>& validation_normal,
                              double quantile) {
    if (validation_normal.empty()) {
        throw Error(Errc::EmptyDataset, "empty calibration set");
    }
    if (!(quantile > 0.0 && quantile < 1.0)) {
        throw Error(Errc::ConfigError, "quantile must lie in (0, 1)");
    }
    std::vector<double> scores;
    scores.reserve(validation_normal.size());
    for (const auto& x : validation_normal) {
        scores.push_back(score(params, x).rmse);
    }
    std::sort(scores.begin(), scores.end());
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(quantile * static_cast<double>(scores.size())));
    if (rank == 0) rank = 1;
    Threshold t;
    t.tau = scores[rank - 1];
    t.quantile = quantile;
    t.calibration_count = scores.size();
    return t;
}

TrafficClass classify(const AnomalyScore& s, const Threshold& t) {
    return s.rmse <= t.tau ? TrafficClass::Normal : TrafficClass::Abnormal;
}

namespace {

void put_u32_be(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) {
        out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
    }
}

void put_u64_be(Bytes& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) {
        out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
    }
}

class ByteReader {
public:
    ByteReader(const Bytes& bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
    std::uint64_t u64() { return take(8); }

    double f64() {
        return std::bit_cast<double>(take(8));
    }

    bool exhausted() const { return pos_ == bytes_.size(); }

private:
    std::uint64_t take(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw Error(Errc::CorruptModel, "model bytes truncated");
        }
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < n; ++i) {
            v = (v << 8) | bytes_[pos_ + i];
        }
        pos_ += n;
        return v;
    }

    const Bytes& bytes_;
    std::size_t pos_ = 0;
};

constexpr char model_magic[4] = {'F', 'C', 'M', '1'};

}  // namespace

Bytes serialize(const ModelParameters& params) {
    validate_topology(params.layer_shapes);
    if (params.weights.size() != weight_count(params.layer_shapes)) {
        throw Error(Errc::CorruptModel, "weight vector length does not match topology");
    }
    Bytes out;
    out.reserve(4 + 8 + 4 + params.layer_shapes.size() * 8 + 8 + params.weights.size() * 8);
    out.insert(out.end(), model_magic, model_magic + 4);
    put_u64_be(out, params.version);
    put_u32_be(out, static_cast<std::uint32_t>(params.layer_shapes.size()));
    for (const auto& [in, dims_out] : params.layer_shapes) {
        put_u32_be(out, in);
        put_u32_be(out, dims_out);
    }
    put_u64_be(out, params.weights.size());
    for (double w : params.weights) {
        put_u64_be(out, std::bit_cast<std::uint64_t>(w));
    }
    return out;
}

ModelParameters deserialize(const Bytes& bytes) {
    if (bytes.size() < 4 || !std::equal(model_magic, model_magic + 4, bytes.begin())) {
        throw Error(Errc::CorruptModel, "bad model magic");
    }
    ByteReader reader(bytes, 4);
    ModelParameters params;
    params.version = reader.u64();
    std::uint32_t layer_total = reader.u32();
    if (layer_total == 0 || layer_total > 1024) {
        throw Error(Errc::CorruptModel, "implausible layer count");
    }
    params.layer_shapes.reserve(layer_total);
    for (std::uint32_t l = 0; l < layer_total; ++l) {
        std::uint32_t in = reader.u32();
        std::uint32_t out = reader.u32();
        params.layer_shapes.emplace_back(in, out);
    }
    try {
        validate_topology(params.layer_shapes);
    } catch (const Error&) {
        throw Error(Errc::CorruptModel, "encoded topology is invalid");
    }
    std::uint64_t declared = reader.u64();
    if (declared != weight_count(params.layer_shapes)) {
        throw Error(Errc::CorruptModel, "declared weight count does not match topology");
    }
    params.weights.reserve(declared);
    for (std::uint64_t k = 0; k < declared; ++k) {
        double w = reader.f64();
        if (!std::isfinite(w)) {
            throw Error(Errc::CorruptModel, "non-finite weight");
        }
        params.weights.push_back(w);
    }
    if (!reader.exhausted()) {
        throw Error(Errc::CorruptModel, "trailing bytes after model payload");
    }
    refresh_hash(params);
    return params;
}

Hash32 param_hash_of(const ModelParameters& params) {
    return keys::sha256(serialize(params));
}

Hash32 ModelStore::put(Bytes model_bytes) {
    Hash32 hash = keys::sha256(model_bytes);
    entries_[hash] = std::move(model_bytes);
    return hash;
}

const Bytes& ModelStore::get(const Hash32& hash) const {
    auto it = entries_.find(hash);
    if (it == entries_.end()) {
        throw Error(Errc::ModelUnavailable, "model bytes not in store: " + to_hex(hash));
    }
    return it->second;
}

bool ModelStore::has(const Hash32& hash) const { return entries_.contains(hash); }

}  // namespace fedchain::ml
