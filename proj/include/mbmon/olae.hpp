#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mbmon/core.hpp"

namespace mbmon {

/// Gated recurrent cell parameters. One (input, recurrent, bias) triple per
/// gate: forget, input, output, candidate.
struct LstmCellParams {
    Eigen::MatrixXd w_f, u_f;
    Eigen::MatrixXd w_i, u_i;
    Eigen::MatrixXd w_o, u_o;
    Eigen::MatrixXd w_c, u_c;
    Eigen::VectorXd b_f, b_i, b_o, b_c;

    Eigen::Index input_dim() const { return w_f.cols(); }
    Eigen::Index hidden_dim() const { return w_f.rows(); }
};

/// Fully-connected code layer with orthogonality-penalized rows.
/// code = tanh(weight * h + bias).
struct OrthoFcParams {
    Eigen::MatrixXd weight;  // latent x hidden
    Eigen::VectorXd bias;    // latent
};

struct OutputLayerParams {
    Eigen::MatrixXd weight;  // output x hidden
    Eigen::VectorXd bias;    // output
};

struct OlaeDims {
    int input = 0;   // variables per block
    int hidden = 0;  // LSTM state size
    int latent = 0;  // code size, must be <= hidden
    int window = 0;  // samples per window
};

/// Encoder LSTM -> orthogonal FC code layer -> decoder LSTM (repeat-vector
/// conditioning) -> affine output map.
struct OlaeModel {
    OlaeDims dims;
    LstmCellParams encoder;
    OrthoFcParams code_layer;
    LstmCellParams decoder;
    OutputLayerParams output_layer;
};

/// Gradient storage mirroring OlaeModel's learnable tensors.
struct OlaeGradients {
    LstmCellParams encoder;
    OrthoFcParams code_layer;
    LstmCellParams decoder;
    OutputLayerParams output_layer;
};

enum class GramNormalization { batch, none };

struct TrainConfig {
    int epochs = 60;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double ortho_weight = 1.0;  // 0 gives the plain LSTM-AE baseline
    std::uint64_t seed = 0;
    double gradient_clip_norm = 5.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    GramNormalization gram_normalization = GramNormalization::batch;
    bool ortho_exclude_diagonal = false;

    void validate() const;
};

/// First-order adaptive optimizer state; one flat moment pair per tensor,
/// shapes mirroring the parameters.
struct AdamState {
    std::vector<Eigen::VectorXd> m, v;
    long step = 0;
};

struct LossBreakdown {
    double total = 0.0;
    double mse = 0.0;
    double ortho = 0.0;
};

struct TrainResult {
    OlaeModel model;
    std::vector<LossBreakdown> history;  // one entry per epoch
    std::vector<std::string> warnings;
};

struct RedundancyReport {
    Eigen::MatrixXd gram;      // (1/B) C^T C
    Eigen::MatrixXd abs_corr;  // |Pearson| of code columns; NaN where undefined
    std::vector<int> constant_columns;
};

/// Flat view over one learnable tensor, used by the optimizer, gradient
/// clipping, serialization and finite-difference checks. View order is fixed.
struct ParamView {
    std::string name;
    double* data;
    Eigen::Index size;
};

std::vector<ParamView> param_views(OlaeModel& model);
std::vector<ParamView> param_views(OlaeGradients& grads);

/// Fresh model with uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights,
/// forget-gate biases at 1, all other biases at 0. Deterministic under seed.
OlaeModel make_olae(const OlaeDims& dims, std::uint64_t seed);

/// Zero-initialized gradient storage shaped like the model.
OlaeGradients make_gradients(const OlaeModel& model);

AdamState make_adam_state(OlaeModel& model);

/// One gated recurrence step: f, i, o via logistic sigmoid, candidate via
/// tanh, c = f.*c_prev + i.*cand, h = o.*tanh(c).
std::pair<Eigen::VectorXd, Eigen::VectorXd> lstm_cell_step(const LstmCellParams& params,
                                                           const Eigen::VectorXd& x,
                                                           const Eigen::VectorXd& h_prev,
                                                           const Eigen::VectorXd& c_prev);

/// Runs the encoder over the window rows from zero state and maps the final
/// hidden state through the code layer.
Eigen::VectorXd encode(const OlaeModel& model, const Eigen::MatrixXd& window);

/// Feeds the code as input at each of the L decoder steps and maps every
/// decoder hidden state through the output layer.
Eigen::MatrixXd decode(const OlaeModel& model, const Eigen::VectorXd& code);

/// Codes for every window of a dataset, one row per window.
Eigen::MatrixXd encode_all(const OlaeModel& model, const WindowedDataset& dataset);

/// mse averaged over batch*window*dim elements; ortho per the code-layer
/// penalty; total = mse + ortho_weight * ortho.
LossBreakdown loss(const OlaeModel& model, const std::vector<Eigen::MatrixXd>& batch,
                   const TrainConfig& cfg);

/// Analytic gradient of the total loss via backpropagation through time.
std::pair<OlaeGradients, LossBreakdown> grad(const OlaeModel& model,
                                             const std::vector<Eigen::MatrixXd>& batch,
                                             const TrainConfig& cfg);

TrainResult train(const OlaeModel& model, const WindowedDataset& dataset, const TrainConfig& cfg);

/// Gram and absolute-correlation redundancy of code columns (n x m input,
/// one code per row).
RedundancyReport redundancy_report(const Eigen::MatrixXd& codes);

/// Sum of squared elements of W W^T, optionally excluding the diagonal, and
/// its gradient. Exposed for direct verification.
double weight_orthogonality_penalty(const Eigen::MatrixXd& weight, bool exclude_diagonal);
Eigen::MatrixXd weight_orthogonality_gradient(const Eigen::MatrixXd& weight,
                                              bool exclude_diagonal);

/// Mean squared error between two equally sized stacks of windows.
double reconstruction_mse(const std::vector<Eigen::MatrixXd>& inputs,
                          const std::vector<Eigen::MatrixXd>& outputs);

std::string model_to_json(const OlaeModel& model);
OlaeModel model_from_json(const std::string& text);

}  // namespace mbmon
