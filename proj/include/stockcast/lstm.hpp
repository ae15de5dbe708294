#pragma once

#include "stockcast/market_data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace stockcast::lstm {

struct Dims {
    std::size_t hidden = 0;
    std::size_t input = 0;
    std::size_t horizon = 0;

    bool operator==(const Dims&) const = default;
};

/// Single-layer LSTM with a direct multi-output head. Gate matrices act on
/// the concatenation [h_{t-1}, x_t] and are hidden x (hidden + input).
struct Weights {
    Eigen::MatrixXd W_f, W_i, W_C, W_o;
    Eigen::VectorXd b_f, b_i, b_C, b_o;
    Eigen::MatrixXd head_W;  // horizon x hidden
    Eigen::VectorXd head_b;  // horizon

    static Weights zeros(const Dims& dims);
    Dims dims() const;
    std::size_t parameter_count() const;

    /// Flat view in storage order: W_f, W_i, W_C, W_o, b_f, b_i, b_C, b_o,
    /// head_W, head_b; matrices row-major.
    Eigen::VectorXd flatten() const;
    static Weights unflatten(const Dims& dims, const Eigen::VectorXd& flat);

    bool all_finite() const;
    bool operator==(const Weights& other) const;
};

struct State {
    Eigen::VectorXd h;
    Eigen::VectorXd C;

    static State zeros(std::size_t hidden);
};

/// Everything the backward pass needs from one cell application.
struct GateRecord {
    Eigen::VectorXd z;  // [h_{t-1}, x_t]
    Eigen::VectorXd f, i, C_tilde, o;
    Eigen::VectorXd C_prev, C, tanh_C;
};

struct CellOutput {
    State state;
    GateRecord record;
};

CellOutput cell_forward(const Eigen::VectorXd& x_t, const State& state, const Weights& w);

/// Runs the cell over every row of `window` (lookback x input) from a zero
/// state and applies the affine head to the final hidden state.
Eigen::VectorXd forward_sequence(const Eigen::MatrixXd& window, const Weights& w);

struct LossAndGradient {
    double loss = 0.0;
    Weights grad;
};

/// Mean squared error over all samples and horizon steps of the given
/// sample indices, with exact gradients by backpropagation through time.
LossAndGradient bptt_gradients(const WindowedDataset& data, std::span<const std::size_t> samples,
                               const Weights& w);
LossAndGradient bptt_gradients(const WindowedDataset& data, const Weights& w);

/// Rescales `grad` to have global L2 norm `max_norm` when it exceeds it.
/// Returns the norm before clipping.
double clip_gradients(Weights& grad, double max_norm);

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t t = 0;
    Eigen::VectorXd m;
    Eigen::VectorXd v;
};

/// Adam update of an arbitrary flat parameter vector, bias-corrected.
void adam_update(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& opt);
void adam_step(Weights& w, const Weights& grad, AdamState& opt);

struct TrainConfig {
    std::size_t hidden = 64;
    std::size_t epochs = 100;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;  // 0 = full batch
    double clip_norm = 1.0;       // <= 0 disables clipping
    std::uint64_t seed = 42;
};

/// Xavier-uniform gate and head matrices, zero biases, forget bias +1.
Weights initialize(const Dims& dims, std::uint64_t seed);

struct TrainResult {
    Weights weights;
    std::vector<double> loss_history;  // sample-weighted mean minibatch loss per epoch
};

/// Minibatch Adam training, shuffled each epoch from the seed. Throws
/// ModelError naming the epoch when the loss becomes non-finite.
TrainResult train(const WindowedDataset& data, const TrainConfig& cfg);

/// Forward pass on a scaled window followed by inverse scaling with the
/// parameters of `target_col`.
std::vector<double> predict_multistep(const Weights& w, const Eigen::MatrixXd& recent_window,
                                      const ScaleParams& scale, std::size_t target_col);

/// A trained network plus what is needed to feed it raw feature rows.
struct Model {
    TrainConfig config;
    Weights weights;
    ScaleParams scale;                     // over the columns of the raw feature matrix
    std::vector<std::size_t> input_cols;   // indices into the raw feature matrix
    std::size_t target_col = 0;
    std::size_t lookback = 0;

    bool operator==(const Model& other) const;
};

/// Fits scaling on `features` (T x F raw values), windows it, and trains.
Model fit_model(const Eigen::MatrixXd& features, std::span<const std::size_t> input_cols, std::size_t target_col,
                std::size_t lookback, std::size_t horizon, const TrainConfig& cfg);

/// Forecast from the last `lookback` rows of raw features, in raw units.
std::vector<double> forecast(const Model& model, const Eigen::MatrixXd& features);

/// Binary layout (little-endian):
///   8 bytes magic "SCLSTM\0\0", u32 version = 1,
///   u64 hidden, input, horizon, lookback, target_col, n_input_cols,
///   u64 input_cols[n_input_cols],
///   u64 epochs, batch_size, seed; f64 learning_rate, clip_norm,
///   u64 n_scale; f64 scale_min[n_scale]; f64 scale_max[n_scale],
///   f64 parameters[parameter_count()] in Weights::flatten order.
void save(const Model& model, const std::filesystem::path& path);
Model load(const std::filesystem::path& path);

}  // namespace stockcast::lstm
