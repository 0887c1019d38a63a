#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace lvo::fcn {

// Encoder-decoder with skip connections. Every convolution is 3x3, stride
// 1, zero padding 1 (the head is 1x1); downsampling is 2x2 max-pool,
// upsampling nearest-neighbour followed by a 3x3 convolution; skips
// concatenate channels at matching resolutions. The flattened deepest
// encoder activation is the feature vector: with the default configuration
// it is 64 channels x 16 x 16 = 16384 long.
struct FcnConfig {
    int input_size = 128;
    int depth = 3;          // encoder stages
    int base_channels = 8;  // doubled per stage
    bool use_skips = true;

    int stage_channels(int stage) const { return base_channels << stage; }
    int bottleneck_channels() const { return base_channels << depth; }
    int bottleneck_size() const { return input_size >> depth; }
    size_t bottleneck_len() const {
        return static_cast<size_t>(bottleneck_channels()) * bottleneck_size() *
               bottleneck_size();
    }
};

void validate_config(const FcnConfig& config);

// Closed-form parameter count implied by the configuration.
size_t parameter_count(const FcnConfig& config);

struct FcnModel {
    FcnConfig config;
    std::vector<double> params;  // all weights and biases, layer-major

    size_t parameter_count() const { return params.size(); }
};

// He-scaled random weights, zero biases; bit-deterministic per seed.
FcnModel init_model(const FcnConfig& config, uint64_t seed);

struct ForwardResult {
    std::vector<double> probs;       // input_size^2, in (0,1)
    std::vector<double> bottleneck;  // flattened deepest encoder activation
};

ForwardResult forward(const FcnModel& model, const std::vector<double>& image);

// Encoder-only pass; equals forward(...).bottleneck.
std::vector<double> extract_features(const FcnModel& model, const std::vector<double>& image);

enum class LossKind : uint8_t { bce, bce_dice };

struct LossGrad {
    double loss = 0.0;
    double bce = 0.0;
    double soft_dice = 1.0;       // batch soft-Dice of predictions vs masks
    std::vector<double> grad;     // same layout as FcnModel::params
};

// Mean binary cross-entropy over pixels and samples (optionally plus
// 1 - soft-Dice); gradients by reverse-mode differentiation.
LossGrad loss_and_grad(const FcnModel& model, const std::vector<std::vector<double>>& images,
                       const std::vector<std::vector<double>>& masks,
                       LossKind kind = LossKind::bce);

enum class Optimizer : uint8_t { sgd, adam };

struct TrainState {
    Optimizer optimizer = Optimizer::adam;
    double learning_rate = 1e-3;
    int batch_size = 8;
    int epochs = 1;
    LossKind loss = LossKind::bce_dice;
    uint64_t seed = 0;
    std::vector<double> loss_history;  // one entry per completed step
    bool aborted_non_finite = false;
};

struct Dataset {
    std::vector<std::vector<double>> images;
    std::vector<std::vector<double>> masks;  // binary, same spatial size
};

// Deterministic per seed (fixed shuffle schedule). A non-finite batch loss
// aborts training and returns the parameters of the last finite step.
TrainState train_fcn(FcnModel& model, const Dataset& data, TrainState state);

struct DotPrediction {
    std::vector<int> slice_areas;  // largest >=0.5 component per slice
    bool flag = false;             // any slice area >= area_threshold
};

// Patient-level dot call over per-slice crops.
DotPrediction predict_dot(const FcnModel& model, const std::vector<std::vector<double>>& crops,
                          double area_threshold = 3.0);

// "fcn-v1" persistence: config plus hexadecimal-encoded 64-bit parameters;
// reload is bit-exact.
std::string to_json(const FcnModel& model);
FcnModel fcn_from_json(const std::string& text);
void save_fcn(const FcnModel& model, const std::string& path);
FcnModel load_fcn(const std::string& path);

}  // namespace lvo::fcn
