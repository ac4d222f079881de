#include "mbmon/olae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "json_tensors.hpp"

namespace mbmon {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd sigmoid(const MatrixXd& z) {
    return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

// Per-step activations for one cell over a batch (columns = batch items).
struct CellCache {
    std::vector<MatrixXd> f, i, o, g, c, tanh_c, h;

    void resize(int steps) {
        f.resize(steps);
        i.resize(steps);
        o.resize(steps);
        g.resize(steps);
        c.resize(steps);
        tanh_c.resize(steps);
        h.resize(steps);
    }
};

void cell_forward(const LstmCellParams& p, const std::vector<MatrixXd>& inputs,
                  CellCache& cache) {
    const int steps = static_cast<int>(inputs.size());
    const Index hidden = p.hidden_dim();
    const Index batch = inputs.front().cols();
    cache.resize(steps);
    MatrixXd h_prev = MatrixXd::Zero(hidden, batch);
    MatrixXd c_prev = MatrixXd::Zero(hidden, batch);
    for (int t = 0; t < steps; ++t) {
        const MatrixXd& x = inputs[static_cast<std::size_t>(t)];
        MatrixXd af = (p.w_f * x + p.u_f * h_prev).colwise() + p.b_f;
        MatrixXd ai = (p.w_i * x + p.u_i * h_prev).colwise() + p.b_i;
        MatrixXd ao = (p.w_o * x + p.u_o * h_prev).colwise() + p.b_o;
        MatrixXd ag = (p.w_c * x + p.u_c * h_prev).colwise() + p.b_c;
        cache.f[t] = sigmoid(af);
        cache.i[t] = sigmoid(ai);
        cache.o[t] = sigmoid(ao);
        cache.g[t] = ag.array().tanh().matrix();
        cache.c[t] = cache.f[t].cwiseProduct(c_prev) + cache.i[t].cwiseProduct(cache.g[t]);
        cache.tanh_c[t] = cache.c[t].array().tanh().matrix();
        cache.h[t] = cache.o[t].cwiseProduct(cache.tanh_c[t]);
        h_prev = cache.h[t];
        c_prev = cache.c[t];
    }
}

// Backpropagates through a cell. dh_out[t] is the gradient arriving at h_t
// from outside the recurrence. Accumulates parameter gradients into `grads`
// and, when dx is non-null, stores per-step input gradients there.
void cell_backward(const LstmCellParams& p, const std::vector<MatrixXd>& inputs,
                   const CellCache& cache, const std::vector<MatrixXd>& dh_out,
                   LstmCellParams& grads, std::vector<MatrixXd>* dx) {
    const int steps = static_cast<int>(inputs.size());
    const Index hidden = p.hidden_dim();
    const Index batch = inputs.front().cols();
    MatrixXd dh_rec = MatrixXd::Zero(hidden, batch);
    MatrixXd dc_rec = MatrixXd::Zero(hidden, batch);
    if (dx != nullptr) {
        dx->assign(static_cast<std::size_t>(steps), MatrixXd());
    }
    for (int t = steps - 1; t >= 0; --t) {
        const MatrixXd dh = dh_out[static_cast<std::size_t>(t)] + dh_rec;
        const MatrixXd& f = cache.f[t];
        const MatrixXd& i = cache.i[t];
        const MatrixXd& o = cache.o[t];
        const MatrixXd& g = cache.g[t];
        const MatrixXd& tc = cache.tanh_c[t];

        MatrixXd do_ = dh.cwiseProduct(tc);
        MatrixXd dct =
            dc_rec + dh.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix());
        MatrixXd df = (t > 0) ? dct.cwiseProduct(cache.c[t - 1]).eval()
                              : MatrixXd::Zero(hidden, batch).eval();
        MatrixXd di = dct.cwiseProduct(g);
        MatrixXd dg = dct.cwiseProduct(i);
        dc_rec = dct.cwiseProduct(f);

        MatrixXd da_f = df.cwiseProduct(f).cwiseProduct((1.0 - f.array()).matrix());
        MatrixXd da_i = di.cwiseProduct(i).cwiseProduct((1.0 - i.array()).matrix());
        MatrixXd da_o = do_.cwiseProduct(o).cwiseProduct((1.0 - o.array()).matrix());
        MatrixXd da_g = dg.cwiseProduct((1.0 - g.array().square()).matrix());

        const MatrixXd& x = inputs[static_cast<std::size_t>(t)];
        grads.w_f.noalias() += da_f * x.transpose();
        grads.w_i.noalias() += da_i * x.transpose();
        grads.w_o.noalias() += da_o * x.transpose();
        grads.w_c.noalias() += da_g * x.transpose();
        if (t > 0) {
            const MatrixXd& h_prev = cache.h[t - 1];
            grads.u_f.noalias() += da_f * h_prev.transpose();
            grads.u_i.noalias() += da_i * h_prev.transpose();
            grads.u_o.noalias() += da_o * h_prev.transpose();
            grads.u_c.noalias() += da_g * h_prev.transpose();
        }
        grads.b_f += da_f.rowwise().sum();
        grads.b_i += da_i.rowwise().sum();
        grads.b_o += da_o.rowwise().sum();
        grads.b_c += da_g.rowwise().sum();

        if (dx != nullptr) {
            (*dx)[static_cast<std::size_t>(t)] = p.w_f.transpose() * da_f +
                                                 p.w_i.transpose() * da_i +
                                                 p.w_o.transpose() * da_o +
                                                 p.w_c.transpose() * da_g;
        }
        dh_rec = p.u_f.transpose() * da_f + p.u_i.transpose() * da_i +
                 p.u_o.transpose() * da_o + p.u_c.transpose() * da_g;
    }
}

struct ForwardPass {
    std::vector<MatrixXd> x;  // window rows per step, input x batch
    CellCache enc;
    MatrixXd code;            // latent x batch
    CellCache dec;
    std::vector<MatrixXd> dec_inputs;  // code repeated at each step
    std::vector<MatrixXd> y;  // reconstructions per step, input x batch
};

void check_batch(const OlaeModel& model, const std::vector<Eigen::MatrixXd>& batch) {
    if (batch.empty()) {
        throw DataError("olae: empty batch");
    }
    for (const auto& win : batch) {
        if (win.rows() != model.dims.window || win.cols() != model.dims.input) {
            throw DataError("olae: window shape " + std::to_string(win.rows()) + "x" +
                            std::to_string(win.cols()) + " does not match model dims " +
                            std::to_string(model.dims.window) + "x" +
                            std::to_string(model.dims.input));
        }
    }
}

void forward(const OlaeModel& model, const std::vector<Eigen::MatrixXd>& batch,
             ForwardPass& fp) {
    const int steps = model.dims.window;
    const Index batch_size = static_cast<Index>(batch.size());
    fp.x.assign(static_cast<std::size_t>(steps), MatrixXd(model.dims.input, batch_size));
    for (int t = 0; t < steps; ++t) {
        for (Index b = 0; b < batch_size; ++b) {
            fp.x[static_cast<std::size_t>(t)].col(b) =
                batch[static_cast<std::size_t>(b)].row(t).transpose();
        }
    }
    cell_forward(model.encoder, fp.x, fp.enc);
    const MatrixXd& h_last = fp.enc.h.back();
    fp.code = ((model.code_layer.weight * h_last).colwise() + model.code_layer.bias)
                  .array()
                  .tanh()
                  .matrix();
    fp.dec_inputs.assign(static_cast<std::size_t>(steps), fp.code);
    cell_forward(model.decoder, fp.dec_inputs, fp.dec);
    fp.y.resize(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) {
        fp.y[static_cast<std::size_t>(t)] =
            (model.output_layer.weight * fp.dec.h[t]).colwise() + model.output_layer.bias;
    }
}

double code_gram_penalty(const MatrixXd& code, GramNormalization normalization,
                         MatrixXd* residual) {
    const Index latent = code.rows();
    MatrixXd gram = code * code.transpose();
    if (normalization == GramNormalization::batch) {
        gram /= static_cast<double>(code.cols());
    }
    MatrixXd g = gram - MatrixXd::Identity(latent, latent);
    if (residual != nullptr) {
        *residual = g;
    }
    return g.squaredNorm();
}

LossBreakdown loss_from_forward(const OlaeModel& model, const ForwardPass& fp,
                                const TrainConfig& cfg, MatrixXd* gram_residual) {
    const int steps = model.dims.window;
    const double k = static_cast<double>(fp.code.cols()) * steps * model.dims.input;
    double sq = 0.0;
    for (int t = 0; t < steps; ++t) {
        sq += (fp.y[static_cast<std::size_t>(t)] - fp.x[static_cast<std::size_t>(t)])
                  .squaredNorm();
    }
    LossBreakdown lb;
    lb.mse = sq / k;
    lb.ortho = weight_orthogonality_penalty(model.code_layer.weight, cfg.ortho_exclude_diagonal) +
               code_gram_penalty(fp.code, cfg.gram_normalization, gram_residual);
    lb.total = lb.mse + cfg.ortho_weight * lb.ortho;
    return lb;
}

void add_views(LstmCellParams& p, const std::string& prefix, std::vector<ParamView>& out) {
    auto add = [&](const char* name, MatrixXd& m) {
        out.push_back({prefix + "." + name, m.data(), m.size()});
    };
    auto addv = [&](const char* name, VectorXd& v) {
        out.push_back({prefix + "." + name, v.data(), v.size()});
    };
    add("w_f", p.w_f);
    add("u_f", p.u_f);
    addv("b_f", p.b_f);
    add("w_i", p.w_i);
    add("u_i", p.u_i);
    addv("b_i", p.b_i);
    add("w_o", p.w_o);
    add("u_o", p.u_o);
    addv("b_o", p.b_o);
    add("w_c", p.w_c);
    add("u_c", p.u_c);
    addv("b_c", p.b_c);
}

template <class Holder>
std::vector<ParamView> views_of(Holder& h) {
    std::vector<ParamView> out;
    out.reserve(28);
    add_views(h.encoder, "encoder", out);
    out.push_back({"code_layer.weight", h.code_layer.weight.data(), h.code_layer.weight.size()});
    out.push_back({"code_layer.bias", h.code_layer.bias.data(), h.code_layer.bias.size()});
    add_views(h.decoder, "decoder", out);
    out.push_back(
        {"output_layer.weight", h.output_layer.weight.data(), h.output_layer.weight.size()});
    out.push_back({"output_layer.bias", h.output_layer.bias.data(), h.output_layer.bias.size()});
    return out;
}

LstmCellParams zero_cell(Index input, Index hidden) {
    LstmCellParams p;
    p.w_f = MatrixXd::Zero(hidden, input);
    p.w_i = MatrixXd::Zero(hidden, input);
    p.w_o = MatrixXd::Zero(hidden, input);
    p.w_c = MatrixXd::Zero(hidden, input);
    p.u_f = MatrixXd::Zero(hidden, hidden);
    p.u_i = MatrixXd::Zero(hidden, hidden);
    p.u_o = MatrixXd::Zero(hidden, hidden);
    p.u_c = MatrixXd::Zero(hidden, hidden);
    p.b_f = VectorXd::Zero(hidden);
    p.b_i = VectorXd::Zero(hidden);
    p.b_o = VectorXd::Zero(hidden);
    p.b_c = VectorXd::Zero(hidden);
    return p;
}

void check_finite_views(std::vector<ParamView> views, const char* what) {
    for (const auto& view : views) {
        for (Index k = 0; k < view.size; ++k) {
            if (!std::isfinite(view.data[k])) {
                throw NumericError(std::string(what) + ": non-finite value in " + view.name);
            }
        }
    }
}

using detail::tensor_from_json;
using detail::tensor_to_json;

nlohmann::ordered_json cell_to_json(const LstmCellParams& p) {
    nlohmann::ordered_json j;
    j["w_f"] = tensor_to_json(p.w_f);
    j["u_f"] = tensor_to_json(p.u_f);
    j["b_f"] = tensor_to_json(p.b_f);
    j["w_i"] = tensor_to_json(p.w_i);
    j["u_i"] = tensor_to_json(p.u_i);
    j["b_i"] = tensor_to_json(p.b_i);
    j["w_o"] = tensor_to_json(p.w_o);
    j["u_o"] = tensor_to_json(p.u_o);
    j["b_o"] = tensor_to_json(p.b_o);
    j["w_c"] = tensor_to_json(p.w_c);
    j["u_c"] = tensor_to_json(p.u_c);
    j["b_c"] = tensor_to_json(p.b_c);
    return j;
}

LstmCellParams cell_from_json(const nlohmann::json& j) {
    LstmCellParams p;
    p.w_f = tensor_from_json(j.at("w_f"));
    p.u_f = tensor_from_json(j.at("u_f"));
    p.b_f = detail::vector_from_json(j.at("b_f"));
    p.w_i = tensor_from_json(j.at("w_i"));
    p.u_i = tensor_from_json(j.at("u_i"));
    p.b_i = detail::vector_from_json(j.at("b_i"));
    p.w_o = tensor_from_json(j.at("w_o"));
    p.u_o = tensor_from_json(j.at("u_o"));
    p.b_o = detail::vector_from_json(j.at("b_o"));
    p.w_c = tensor_from_json(j.at("w_c"));
    p.u_c = tensor_from_json(j.at("u_c"));
    p.b_c = detail::vector_from_json(j.at("b_c"));
    return p;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs <= 0 || batch_size <= 0 || learning_rate <= 0.0 || gradient_clip_norm <= 0.0 ||
        beta1 <= 0.0 || beta2 <= 0.0 || epsilon <= 0.0) {
        throw ConfigError("train config: all numeric settings must be positive");
    }
    if (ortho_weight < 0.0) {
        throw ConfigError("train config: ortho_weight must be >= 0");
    }
}

std::vector<ParamView> param_views(OlaeModel& model) { return views_of(model); }
std::vector<ParamView> param_views(OlaeGradients& grads) { return views_of(grads); }

OlaeModel make_olae(const OlaeDims& dims, std::uint64_t seed) {
    if (dims.input < 1 || dims.hidden < 1 || dims.latent < 1 || dims.window < 1) {
        throw ConfigError("olae dims: all dimensions must be >= 1");
    }
    if (dims.latent > dims.hidden) {
        throw ConfigError("olae dims: latent " + std::to_string(dims.latent) +
                          " exceeds hidden " + std::to_string(dims.hidden) +
                          " (orthogonal rows cannot exceed ambient dimension)");
    }
    OlaeModel model;
    model.dims = dims;
    model.encoder = zero_cell(dims.input, dims.hidden);
    model.decoder = zero_cell(dims.latent, dims.hidden);
    model.code_layer.weight = MatrixXd::Zero(dims.latent, dims.hidden);
    model.code_layer.bias = VectorXd::Zero(dims.latent);
    model.output_layer.weight = MatrixXd::Zero(dims.input, dims.hidden);
    model.output_layer.bias = VectorXd::Zero(dims.input);

    std::mt19937_64 rng(seed);
    auto fill = [&rng](MatrixXd& m, Index fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Index k = 0; k < m.size(); ++k) {
            m.data()[k] = dist(rng);
        }
    };
    auto fill_cell = [&](LstmCellParams& cell) {
        fill(cell.w_f, cell.input_dim());
        fill(cell.u_f, cell.hidden_dim());
        fill(cell.w_i, cell.input_dim());
        fill(cell.u_i, cell.hidden_dim());
        fill(cell.w_o, cell.input_dim());
        fill(cell.u_o, cell.hidden_dim());
        fill(cell.w_c, cell.input_dim());
        fill(cell.u_c, cell.hidden_dim());
        cell.b_f.setOnes();  // keep memory open early in training
    };
    fill_cell(model.encoder);
    fill(model.code_layer.weight, dims.hidden);
    fill_cell(model.decoder);
    fill(model.output_layer.weight, dims.hidden);
    return model;
}

OlaeGradients make_gradients(const OlaeModel& model) {
    OlaeGradients g;
    g.encoder = zero_cell(model.dims.input, model.dims.hidden);
    g.decoder = zero_cell(model.dims.latent, model.dims.hidden);
    g.code_layer.weight = MatrixXd::Zero(model.dims.latent, model.dims.hidden);
    g.code_layer.bias = VectorXd::Zero(model.dims.latent);
    g.output_layer.weight = MatrixXd::Zero(model.dims.input, model.dims.hidden);
    g.output_layer.bias = VectorXd::Zero(model.dims.input);
    return g;
}

AdamState make_adam_state(OlaeModel& model) {
    AdamState state;
    for (const auto& view : param_views(model)) {
        state.m.push_back(VectorXd::Zero(view.size));
        state.v.push_back(VectorXd::Zero(view.size));
    }
    return state;
}

std::pair<VectorXd, VectorXd> lstm_cell_step(const LstmCellParams& params, const VectorXd& x,
                                             const VectorXd& h_prev, const VectorXd& c_prev) {
    if (x.size() != params.input_dim() || h_prev.size() != params.hidden_dim() ||
        c_prev.size() != params.hidden_dim()) {
        throw DataError("lstm_cell_step: dimension mismatch");
    }
    auto gate = [&](const MatrixXd& w, const MatrixXd& u, const VectorXd& b) {
        return (w * x + u * h_prev + b).eval();
    };
    VectorXd f = sigmoid(gate(params.w_f, params.u_f, params.b_f));
    VectorXd i = sigmoid(gate(params.w_i, params.u_i, params.b_i));
    VectorXd o = sigmoid(gate(params.w_o, params.u_o, params.b_o));
    VectorXd cand = gate(params.w_c, params.u_c, params.b_c).array().tanh();
    VectorXd c = f.cwiseProduct(c_prev) + i.cwiseProduct(cand);
    VectorXd h = o.cwiseProduct(c.array().tanh().matrix());
    if (!h.allFinite() || !c.allFinite()) {
        throw NumericError("lstm_cell_step: non-finite state (check cell weights w/u/b)");
    }
    return {std::move(h), std::move(c)};
}

Eigen::VectorXd encode(const OlaeModel& model, const Eigen::MatrixXd& window) {
    if (window.rows() != model.dims.window || window.cols() != model.dims.input) {
        throw DataError("encode: window shape " + std::to_string(window.rows()) + "x" +
                        std::to_string(window.cols()) + " does not match model dims");
    }
    VectorXd h = VectorXd::Zero(model.dims.hidden);
    VectorXd c = VectorXd::Zero(model.dims.hidden);
    for (int t = 0; t < model.dims.window; ++t) {
        std::tie(h, c) = lstm_cell_step(model.encoder, window.row(t).transpose(), h, c);
    }
    VectorXd code =
        (model.code_layer.weight * h + model.code_layer.bias).array().tanh().matrix();
    if (!code.allFinite()) {
        throw NumericError("encode: non-finite code (check code_layer.weight)");
    }
    return code;
}

Eigen::MatrixXd decode(const OlaeModel& model, const Eigen::VectorXd& code) {
    if (code.size() != model.dims.latent) {
        throw DataError("decode: code length " + std::to_string(code.size()) +
                        " does not match latent dim " + std::to_string(model.dims.latent));
    }
    VectorXd h = VectorXd::Zero(model.dims.hidden);
    VectorXd c = VectorXd::Zero(model.dims.hidden);
    MatrixXd out(model.dims.window, model.dims.input);
    for (int t = 0; t < model.dims.window; ++t) {
        std::tie(h, c) = lstm_cell_step(model.decoder, code, h, c);
        out.row(t) = (model.output_layer.weight * h + model.output_layer.bias).transpose();
    }
    if (!out.allFinite()) {
        throw NumericError("decode: non-finite reconstruction (check output_layer.weight)");
    }
    return out;
}

Eigen::MatrixXd encode_all(const OlaeModel& model, const WindowedDataset& dataset) {
    MatrixXd codes(dataset.size(), model.dims.latent);
    for (int i = 0; i < dataset.size(); ++i) {
        codes.row(i) = encode(model, dataset.window(i)).transpose();
    }
    return codes;
}

double weight_orthogonality_penalty(const Eigen::MatrixXd& weight, bool exclude_diagonal) {
    MatrixXd gram = weight * weight.transpose();
    if (exclude_diagonal) {
        gram.diagonal().setZero();
    }
    return gram.squaredNorm();
}

Eigen::MatrixXd weight_orthogonality_gradient(const Eigen::MatrixXd& weight,
                                              bool exclude_diagonal) {
    MatrixXd gram = weight * weight.transpose();
    if (exclude_diagonal) {
        gram.diagonal().setZero();
    }
    return 4.0 * gram * weight;
}

double reconstruction_mse(const std::vector<Eigen::MatrixXd>& inputs,
                          const std::vector<Eigen::MatrixXd>& outputs) {
    if (inputs.empty() || inputs.size() != outputs.size()) {
        throw DataError("reconstruction_mse: mismatched batches");
    }
    double sq = 0.0;
    double count = 0.0;
    for (std::size_t b = 0; b < inputs.size(); ++b) {
        sq += (inputs[b] - outputs[b]).squaredNorm();
        count += static_cast<double>(inputs[b].size());
    }
    return sq / count;
}

LossBreakdown loss(const OlaeModel& model, const std::vector<Eigen::MatrixXd>& batch,
                   const TrainConfig& cfg) {
    cfg.validate();
    check_batch(model, batch);
    ForwardPass fp;
    forward(model, batch, fp);
    return loss_from_forward(model, fp, cfg, nullptr);
}

std::pair<OlaeGradients, LossBreakdown> grad(const OlaeModel& model,
                                             const std::vector<Eigen::MatrixXd>& batch,
                                             const TrainConfig& cfg) {
    cfg.validate();
    check_batch(model, batch);
    ForwardPass fp;
    forward(model, batch, fp);
    MatrixXd gram_residual;
    LossBreakdown lb = loss_from_forward(model, fp, cfg, &gram_residual);

    OlaeGradients grads = make_gradients(model);
    const int steps = model.dims.window;
    const Index batch_size = static_cast<Index>(batch.size());
    const double k = static_cast<double>(batch_size) * steps * model.dims.input;

    // Output layer and the gradient reaching each decoder hidden state.
    std::vector<MatrixXd> dh_dec(static_cast<std::size_t>(steps));
    const MatrixXd v_t = model.output_layer.weight.transpose();
    for (int t = 0; t < steps; ++t) {
        MatrixXd dy = (2.0 / k) * (fp.y[static_cast<std::size_t>(t)] -
                                   fp.x[static_cast<std::size_t>(t)]);
        grads.output_layer.weight.noalias() += dy * fp.dec.h[t].transpose();
        grads.output_layer.bias += dy.rowwise().sum();
        dh_dec[static_cast<std::size_t>(t)] = v_t * dy;
    }

    // Decoder; the code is its input at every step, so input gradients
    // accumulate into the code.
    std::vector<MatrixXd> dx_dec;
    cell_backward(model.decoder, fp.dec_inputs, fp.dec, dh_dec, grads.decoder, &dx_dec);
    MatrixXd dcode = MatrixXd::Zero(model.dims.latent, batch_size);
    for (const auto& dx : dx_dec) {
        dcode += dx;
    }

    // Orthogonality penalty on the batch code Gram matrix.
    if (cfg.ortho_weight != 0.0) {
        double scale = 4.0;
        if (cfg.gram_normalization == GramNormalization::batch) {
            scale /= static_cast<double>(batch_size);
        }
        dcode.noalias() += cfg.ortho_weight * scale * (gram_residual * fp.code);
    }

    // Code layer.
    MatrixXd dpre = dcode.cwiseProduct((1.0 - fp.code.array().square()).matrix());
    grads.code_layer.weight.noalias() += dpre * fp.enc.h.back().transpose();
    if (cfg.ortho_weight != 0.0) {
        grads.code_layer.weight +=
            cfg.ortho_weight *
            weight_orthogonality_gradient(model.code_layer.weight, cfg.ortho_exclude_diagonal);
    }
    grads.code_layer.bias += dpre.rowwise().sum();

    // Encoder receives gradient only through its final hidden state.
    std::vector<MatrixXd> dh_enc(static_cast<std::size_t>(steps),
                                 MatrixXd::Zero(model.dims.hidden, batch_size));
    dh_enc.back() = model.code_layer.weight.transpose() * dpre;
    cell_backward(model.encoder, fp.x, fp.enc, dh_enc, grads.encoder, nullptr);

    check_finite_views(param_views(grads), "grad");
    return {std::move(grads), lb};
}

TrainResult train(const OlaeModel& model, const WindowedDataset& dataset,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.size() < 1) {
        throw DataError("train: empty dataset");
    }
    TrainResult result;
    result.model = model;
    AdamState adam = make_adam_state(result.model);
    auto model_v = param_views(result.model);

    std::mt19937_64 rng(cfg.seed);
    std::vector<int> order(static_cast<std::size_t>(dataset.size()));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        LossBreakdown epoch_loss;
        double seen = 0.0;
        for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), pos + cfg.batch_size);
            std::vector<MatrixXd> batch;
            batch.reserve(end - pos);
            for (std::size_t j = pos; j < end; ++j) {
                batch.emplace_back(dataset.window(order[j]));
            }
            auto [grads, lb] = grad(result.model, batch, cfg);
            if (!std::isfinite(lb.total)) {
                throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
            }
            const double w = static_cast<double>(batch.size());
            epoch_loss.total += w * lb.total;
            epoch_loss.mse += w * lb.mse;
            epoch_loss.ortho += w * lb.ortho;
            seen += w;

            auto grad_v = param_views(grads);
            double sq_norm = 0.0;
            for (const auto& view : grad_v) {
                sq_norm += Eigen::Map<VectorXd>(view.data, view.size).squaredNorm();
            }
            const double norm = std::sqrt(sq_norm);
            const double clip_scale =
                (norm > cfg.gradient_clip_norm) ? cfg.gradient_clip_norm / norm : 1.0;

            ++adam.step;
            const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
            const double corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
            for (std::size_t i = 0; i < grad_v.size(); ++i) {
                Eigen::Map<VectorXd> g(grad_v[i].data, grad_v[i].size);
                if (clip_scale != 1.0) {
                    g *= clip_scale;
                }
                adam.m[i] = cfg.beta1 * adam.m[i] + (1.0 - cfg.beta1) * g;
                adam.v[i] = cfg.beta2 * adam.v[i] +
                            (1.0 - cfg.beta2) * g.cwiseProduct(g);
                Eigen::Map<VectorXd> p(model_v[i].data, model_v[i].size);
                p.array() -= cfg.learning_rate * (adam.m[i].array() / corr1) /
                             ((adam.v[i].array() / corr2).sqrt() + cfg.epsilon);
            }
        }
        epoch_loss.total /= seen;
        epoch_loss.mse /= seen;
        epoch_loss.ortho /= seen;
        result.history.push_back(epoch_loss);
    }

    // Smoothed-loss sanity: the 5-epoch moving average of the training loss
    // should not increase.
    std::vector<double> ma;
    for (std::size_t i = 0; i < result.history.size(); ++i) {
        const std::size_t lo = (i >= 4) ? i - 4 : 0;
        double acc = 0.0;
        for (std::size_t j = lo; j <= i; ++j) {
            acc += result.history[j].total;
        }
        ma.push_back(acc / static_cast<double>(i - lo + 1));
    }
    int violations = 0;
    std::size_t first = 0;
    for (std::size_t i = 1; i < ma.size(); ++i) {
        if (ma[i] > ma[i - 1] + 1e-12) {
            if (violations == 0) {
                first = i;
            }
            ++violations;
        }
    }
    if (violations > 0) {
        result.warnings.push_back("smoothed training loss increased at epoch " +
                                  std::to_string(first) + " (" + std::to_string(violations) +
                                  " epoch(s) total)");
    }
    return result;
}

RedundancyReport redundancy_report(const Eigen::MatrixXd& codes) {
    const Index n = codes.rows();
    const Index m = codes.cols();
    if (n < 2) {
        throw DataError("redundancy_report: needs at least 2 code rows");
    }
    RedundancyReport report;
    report.gram = (codes.transpose() * codes) / static_cast<double>(n);

    Eigen::RowVectorXd mean = codes.colwise().mean();
    MatrixXd centered = codes.rowwise() - mean;
    VectorXd sd =
        (centered.array().square().colwise().sum() / static_cast<double>(n)).sqrt();
    std::vector<bool> constant(static_cast<std::size_t>(m));
    for (Index j = 0; j < m; ++j) {
        constant[static_cast<std::size_t>(j)] = sd[j] < 1e-12;
        if (constant[static_cast<std::size_t>(j)]) {
            report.constant_columns.push_back(static_cast<int>(j));
        }
    }
    report.abs_corr = MatrixXd::Constant(m, m, std::numeric_limits<double>::quiet_NaN());
    for (Index a = 0; a < m; ++a) {
        for (Index b = 0; b < m; ++b) {
            if (constant[static_cast<std::size_t>(a)] || constant[static_cast<std::size_t>(b)]) {
                continue;  // undefined, left as NaN and flagged
            }
            const double cov =
                centered.col(a).dot(centered.col(b)) / static_cast<double>(n);
            report.abs_corr(a, b) = std::abs(cov / (sd[a] * sd[b]));
        }
    }
    return report;
}

std::string model_to_json(const OlaeModel& model) {
    nlohmann::ordered_json j;
    j["version"] = "olae_model_v1";
    j["dims"] = {{"input", model.dims.input},
                 {"hidden", model.dims.hidden},
                 {"latent", model.dims.latent},
                 {"window", model.dims.window}};
    j["encoder"] = cell_to_json(model.encoder);
    j["code_layer"] = {{"weight", tensor_to_json(model.code_layer.weight)},
                       {"bias", tensor_to_json(model.code_layer.bias)}};
    j["decoder"] = cell_to_json(model.decoder);
    j["output_layer"] = {{"weight", tensor_to_json(model.output_layer.weight)},
                         {"bias", tensor_to_json(model.output_layer.bias)}};
    return j.dump(2);
}

OlaeModel model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model json: parse failure: ") + e.what());
    }
    if (j.value("version", "") != "olae_model_v1") {
        throw DataError("model json: unsupported version '" + j.value("version", "") + "'");
    }
    OlaeModel model;
    try {
        const auto& dims = j.at("dims");
        model.dims.input = dims.at("input").get<int>();
        model.dims.hidden = dims.at("hidden").get<int>();
        model.dims.latent = dims.at("latent").get<int>();
        model.dims.window = dims.at("window").get<int>();
        model.encoder = cell_from_json(j.at("encoder"));
        model.code_layer.weight = tensor_from_json(j.at("code_layer").at("weight"));
        model.code_layer.bias = detail::vector_from_json(j.at("code_layer").at("bias"));
        model.decoder = cell_from_json(j.at("decoder"));
        model.output_layer.weight = tensor_from_json(j.at("output_layer").at("weight"));
        model.output_layer.bias = detail::vector_from_json(j.at("output_layer").at("bias"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model json: missing or malformed field: ") + e.what());
    }
    if (model.encoder.input_dim() != model.dims.input ||
        model.encoder.hidden_dim() != model.dims.hidden ||
        model.decoder.input_dim() != model.dims.latent ||
        model.code_layer.weight.rows() != model.dims.latent ||
        model.output_layer.weight.rows() != model.dims.input) {
        throw DataError("model json: tensor shapes do not match declared dims");
    }
    return model;
}

}  // namespace mbmon
