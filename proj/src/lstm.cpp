#include "stockcast/lstm.hpp"

#include "stockcast/errors.hpp"
#include "stockcast/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

namespace stockcast::lstm {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index idx(std::size_t v) { return static_cast<Index>(v); }

VectorXd sigmoid(const VectorXd& a) {
    return a.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

VectorXd tanh_of(const VectorXd& a) {
    return a.unaryExpr([](double v) { return std::tanh(v); });
}

void check_dims(const Weights& w, std::size_t input) {
    const auto d = w.dims();
    if (d.input != input) {
        throw ModelError("input width " + std::to_string(input) + " does not match weights (" +
                         std::to_string(d.input) + ")");
    }
}

template <typename Fn>
void for_each_tensor(const Weights& w, Fn&& fn) {
    for (const MatrixXd* m : {&w.W_f, &w.W_i, &w.W_C, &w.W_o}) fn(*m);
    for (const VectorXd* b : {&w.b_f, &w.b_i, &w.b_C, &w.b_o}) fn(*b);
    fn(w.head_W);
    fn(w.head_b);
}

template <typename Fn>
void for_each_tensor(Weights& w, Fn&& fn) {
    for (MatrixXd* m : {&w.W_f, &w.W_i, &w.W_C, &w.W_o}) fn(*m);
    for (VectorXd* b : {&w.b_f, &w.b_i, &w.b_C, &w.b_o}) fn(*b);
    fn(w.head_W);
    fn(w.head_b);
}

}  // namespace

Weights Weights::zeros(const Dims& dims) {
    const Index h = idx(dims.hidden);
    const Index cols = idx(dims.hidden + dims.input);
    Weights w;
    w.W_f = w.W_i = w.W_C = w.W_o = MatrixXd::Zero(h, cols);
    w.b_f = w.b_i = w.b_C = w.b_o = VectorXd::Zero(h);
    w.head_W = MatrixXd::Zero(idx(dims.horizon), h);
    w.head_b = VectorXd::Zero(idx(dims.horizon));
    return w;
}

Dims Weights::dims() const {
    const auto hidden = static_cast<std::size_t>(W_f.rows());
    return Dims{hidden, static_cast<std::size_t>(W_f.cols()) - hidden, static_cast<std::size_t>(head_W.rows())};
}

std::size_t Weights::parameter_count() const {
    std::size_t n = 0;
    for_each_tensor(*this, [&n](const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
}

VectorXd Weights::flatten() const {
    VectorXd flat(idx(parameter_count()));
    Index k = 0;
    for_each_tensor(*this, [&](const auto& t) {
        for (Index r = 0; r < t.rows(); ++r) {
            for (Index c = 0; c < t.cols(); ++c) flat(k++) = t(r, c);
        }
    });
    return flat;
}

Weights Weights::unflatten(const Dims& dims, const VectorXd& flat) {
    Weights w = zeros(dims);
    if (static_cast<std::size_t>(flat.size()) != w.parameter_count()) {
        throw ModelError("flat parameter vector has wrong length");
    }
    Index k = 0;
    for_each_tensor(w, [&](auto& t) {
        for (Index r = 0; r < t.rows(); ++r) {
            for (Index c = 0; c < t.cols(); ++c) t(r, c) = flat(k++);
        }
    });
    return w;
}

bool Weights::all_finite() const { return flatten().allFinite(); }

bool Weights::operator==(const Weights& other) const {
    return dims() == other.dims() && flatten() == other.flatten();
}

State State::zeros(std::size_t hidden) { return State{VectorXd::Zero(idx(hidden)), VectorXd::Zero(idx(hidden))}; }

CellOutput cell_forward(const VectorXd& x_t, const State& state, const Weights& w) {
    check_dims(w, static_cast<std::size_t>(x_t.size()));
    if (state.h.size() != w.W_f.rows() || state.C.size() != w.W_f.rows()) {
        throw ModelError("state size does not match hidden size");
    }
    GateRecord rec;
    rec.z.resize(state.h.size() + x_t.size());
    rec.z << state.h, x_t;
    rec.f = sigmoid(w.W_f * rec.z + w.b_f);
    rec.i = sigmoid(w.W_i * rec.z + w.b_i);
    rec.C_tilde = tanh_of(w.W_C * rec.z + w.b_C);
    rec.o = sigmoid(w.W_o * rec.z + w.b_o);
    rec.C_prev = state.C;
    rec.C = rec.f.cwiseProduct(state.C) + rec.i.cwiseProduct(rec.C_tilde);
    rec.tanh_C = tanh_of(rec.C);
    State next{rec.o.cwiseProduct(rec.tanh_C), rec.C};
    return CellOutput{std::move(next), std::move(rec)};
}

VectorXd forward_sequence(const MatrixXd& window, const Weights& w) {
    check_dims(w, static_cast<std::size_t>(window.cols()));
    State s = State::zeros(static_cast<std::size_t>(w.W_f.rows()));
    for (Index t = 0; t < window.rows(); ++t) {
        s = cell_forward(window.row(t).transpose(), s, w).state;
    }
    return w.head_W * s.h + w.head_b;
}

LossAndGradient bptt_gradients(const WindowedDataset& data, std::span<const std::size_t> samples, const Weights& w) {
    if (samples.empty()) throw ModelError("empty batch");
    check_dims(w, data.features());
    const auto dims = w.dims();
    if (dims.horizon != data.horizon()) throw ModelError("horizon does not match weights");

    // Columns are samples; the four gates are stacked as f, i, C~, o.
    const Index H = idx(dims.hidden);
    const Index F = idx(dims.input);
    const Index B = idx(samples.size());
    const Index L = idx(data.lookback());
    MatrixXd W(4 * H, H + F);
    W << w.W_f, w.W_i, w.W_C, w.W_o;
    VectorXd b(4 * H);
    b << w.b_f, w.b_i, w.b_C, w.b_o;

    struct Step {
        MatrixXd z, gates, C_prev, C, tanh_C;
    };
    std::vector<Step> steps(static_cast<std::size_t>(L));
    MatrixXd h = MatrixXd::Zero(H, B);
    MatrixXd C = MatrixXd::Zero(H, B);
    for (Index t = 0; t < L; ++t) {
        Step& st = steps[static_cast<std::size_t>(t)];
        st.z.resize(H + F, B);
        st.z.topRows(H) = h;
        for (Index k = 0; k < B; ++k) {
            st.z.col(k).tail(F) = data.inputs.at(samples[static_cast<std::size_t>(k)]).row(t).transpose();
        }
        st.gates.noalias() = W * st.z;
        st.gates.colwise() += b;
        auto a = st.gates.array();
        a.topRows(2 * H) = 1.0 / (1.0 + (-a.topRows(2 * H)).exp());
        a.middleRows(2 * H, H) = a.middleRows(2 * H, H).tanh();
        a.bottomRows(H) = 1.0 / (1.0 + (-a.bottomRows(H)).exp());
        st.C_prev = C;
        C = a.topRows(H) * C.array() + a.middleRows(H, H) * a.middleRows(2 * H, H);
        st.C = C;
        st.tanh_C = C.array().tanh();
        h = a.bottomRows(H) * st.tanh_C.array();
    }

    MatrixXd targets(idx(dims.horizon), B);
    for (Index k = 0; k < B; ++k) targets.col(k) = data.targets.row(idx(samples[static_cast<std::size_t>(k)])).transpose();
    MatrixXd err = w.head_W * h;
    err.colwise() += w.head_b;
    err -= targets;

    const double scale = 1.0 / static_cast<double>(samples.size() * dims.horizon);
    LossAndGradient out{err.squaredNorm() * scale, Weights::zeros(dims)};
    auto& g = out.grad;
    const MatrixXd dy = 2.0 * scale * err;
    g.head_W.noalias() = dy * h.transpose();
    g.head_b = dy.rowwise().sum();

    MatrixXd dh = w.head_W.transpose() * dy;
    MatrixXd dC = MatrixXd::Zero(H, B);
    MatrixXd gW = MatrixXd::Zero(4 * H, H + F);
    VectorXd gb = VectorXd::Zero(4 * H);
    MatrixXd act(4 * H, B);
    for (Index t = L - 1; t >= 0; --t) {
        const Step& st = steps[static_cast<std::size_t>(t)];
        const auto f = st.gates.array().topRows(H);
        const auto i = st.gates.array().middleRows(H, H);
        const auto Ct = st.gates.array().middleRows(2 * H, H);
        const auto o = st.gates.array().bottomRows(H);
        const auto tc = st.tanh_C.array();
        dC.array() += dh.array() * o * (1.0 - tc.square());
        act.topRows(H).array() = dC.array() * st.C_prev.array() * f * (1.0 - f);
        act.middleRows(H, H).array() = dC.array() * Ct * i * (1.0 - i);
        act.middleRows(2 * H, H).array() = dC.array() * i * (1.0 - Ct.square());
        act.bottomRows(H).array() = dh.array() * tc * o * (1.0 - o);
        gW.noalias() += act * st.z.transpose();
        gb += act.rowwise().sum();
        dh.noalias() = W.leftCols(H).transpose() * act;
        dC.array() *= f;
    }
    g.W_f = gW.topRows(H);
    g.W_i = gW.middleRows(H, H);
    g.W_C = gW.middleRows(2 * H, H);
    g.W_o = gW.bottomRows(H);
    g.b_f = gb.head(H);
    g.b_i = gb.segment(H, H);
    g.b_C = gb.segment(2 * H, H);
    g.b_o = gb.tail(H);
    if (!std::isfinite(out.loss)) throw ModelError("non-finite loss");
    return out;
}

LossAndGradient bptt_gradients(const WindowedDataset& data, const Weights& w) {
    std::vector<std::size_t> all(data.samples());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return bptt_gradients(data, all, w);
}

double clip_gradients(Weights& grad, double max_norm) {
    double sq = 0.0;
    for_each_tensor(std::as_const(grad), [&sq](const auto& t) { sq += t.squaredNorm(); });
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double factor = max_norm / norm;
        for_each_tensor(grad, [factor](auto& t) { t *= factor; });
    }
    return norm;
}

void adam_update(VectorXd& params, const VectorXd& grad, AdamState& opt) {
    if (grad.size() != params.size()) throw ModelError("gradient shape does not match parameters");
    if (!grad.allFinite()) throw ModelError("non-finite gradient entries");
    if (opt.m.size() == 0) {
        opt.m = VectorXd::Zero(params.size());
        opt.v = VectorXd::Zero(params.size());
    }
    if (opt.m.size() != params.size()) throw ModelError("optimizer state shape does not match parameters");
    opt.t += 1;
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * grad;
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
    for (Index k = 0; k < params.size(); ++k) {
        const double m_hat = opt.m(k) / c1;
        const double v_hat = opt.v(k) / c2;
        params(k) -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
}

void adam_step(Weights& w, const Weights& grad, AdamState& opt) {
    if (!(grad.dims() == w.dims())) throw ModelError("gradient shape does not match weights");
    VectorXd flat = w.flatten();
    adam_update(flat, grad.flatten(), opt);
    w = Weights::unflatten(w.dims(), flat);
}

Weights initialize(const Dims& dims, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Weights w = Weights::zeros(dims);
    const auto xavier = [&rng](MatrixXd& m, double fan_in, double fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
        }
    };
    const double gate_in = static_cast<double>(dims.hidden + dims.input);
    const double gate_out = static_cast<double>(dims.hidden);
    for (MatrixXd* m : {&w.W_f, &w.W_i, &w.W_C, &w.W_o}) xavier(*m, gate_in, gate_out);
    xavier(w.head_W, static_cast<double>(dims.hidden), static_cast<double>(dims.horizon));
    w.b_f.setConstant(1.0);
    return w;
}

TrainResult train(const WindowedDataset& data, const TrainConfig& cfg) {
    if (data.samples() == 0) throw ModelError("cannot train on an empty dataset");
    if (cfg.hidden == 0 || cfg.epochs == 0 || !(cfg.learning_rate > 0.0)) {
        throw ModelError("invalid training configuration (hidden, epochs and learning rate must be positive)");
    }
    const Dims dims{cfg.hidden, data.features(), data.horizon()};
    TrainResult result{initialize(dims, cfg.seed), {}};
    result.loss_history.reserve(cfg.epochs);

    AdamState opt;
    opt.learning_rate = cfg.learning_rate;
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(data.samples());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batch = cfg.batch_size == 0 ? order.size() : std::min(cfg.batch_size, order.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (batch < order.size()) std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t len = std::min(batch, order.size() - start);
            LossAndGradient lg;
            try {
                lg = bptt_gradients(data, std::span(order).subspan(start, len), result.weights);
            } catch (const ModelError&) {
                throw ModelError("training diverged at epoch " + std::to_string(epoch + 1));
            }
            if (cfg.clip_norm > 0.0) clip_gradients(lg.grad, cfg.clip_norm);
            adam_step(result.weights, lg.grad, opt);
            epoch_loss += lg.loss * static_cast<double>(len);
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss) || !result.weights.all_finite()) {
            throw ModelError("training diverged at epoch " + std::to_string(epoch + 1));
        }
        result.loss_history.push_back(epoch_loss);
    }
    return result;
}

std::vector<double> predict_multistep(const Weights& w, const MatrixXd& recent_window, const ScaleParams& scale,
                                      std::size_t target_col) {
    if (target_col >= scale.features()) throw ModelError("scale parameters do not cover the target feature");
    const VectorXd y = forward_sequence(recent_window, w);
    std::vector<double> out(static_cast<std::size_t>(y.size()));
    for (Index k = 0; k < y.size(); ++k) out[static_cast<std::size_t>(k)] = scale.from_unit(target_col, y(k));
    return out;
}

bool Model::operator==(const Model& other) const {
    return config.hidden == other.config.hidden && config.epochs == other.config.epochs &&
           config.learning_rate == other.config.learning_rate && config.batch_size == other.config.batch_size &&
           config.clip_norm == other.config.clip_norm && config.seed == other.config.seed &&
           weights == other.weights && scale == other.scale && input_cols == other.input_cols &&
           target_col == other.target_col && lookback == other.lookback;
}

Model fit_model(const MatrixXd& features, std::span<const std::size_t> input_cols, std::size_t target_col,
                std::size_t lookback, std::size_t horizon, const TrainConfig& cfg) {
    const auto scaled = scale_minmax(features);
    const auto ds = split_sequences(scaled.values, lookback, horizon, target_col, input_cols);
    auto trained = train(ds, cfg);
    return Model{cfg, std::move(trained.weights), scaled.params,
                 std::vector<std::size_t>(input_cols.begin(), input_cols.end()), target_col, lookback};
}

std::vector<double> forecast(const Model& model, const MatrixXd& features) {
    if (static_cast<std::size_t>(features.rows()) < model.lookback) {
        throw ModelError("need at least " + std::to_string(model.lookback) + " rows to forecast");
    }
    const MatrixXd scaled = apply_scale(features.bottomRows(idx(model.lookback)), model.scale);
    MatrixXd window(idx(model.lookback), idx(model.input_cols.size()));
    for (std::size_t c = 0; c < model.input_cols.size(); ++c) window.col(idx(c)) = scaled.col(idx(model.input_cols[c]));
    return predict_multistep(model.weights, window, model.scale, model.target_col);
}

namespace {

constexpr char kMagic[8] = {'S', 'C', 'L', 'S', 'T', 'M', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "model files are little-endian");

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > bytes_.size()) throw DataError("truncated LSTM model file");
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::size_t size(std::size_t limit = 1u << 28) {
        const auto v = get<std::uint64_t>();
        if (v > limit) throw DataError("implausible size in LSTM model file");
        return static_cast<std::size_t>(v);
    }

    bool at_end() const { return pos_ == bytes_.size(); }
    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void save(const Model& model, const std::filesystem::path& path) {
    std::string out(kMagic, sizeof(kMagic));
    put(out, kVersion);
    const auto d = model.weights.dims();
    for (std::size_t v : {d.hidden, d.input, d.horizon, model.lookback, model.target_col, model.input_cols.size()}) {
        put<std::uint64_t>(out, v);
    }
    for (std::size_t c : model.input_cols) put<std::uint64_t>(out, c);
    put<std::uint64_t>(out, model.config.epochs);
    put<std::uint64_t>(out, model.config.batch_size);
    put<std::uint64_t>(out, model.config.seed);
    put(out, model.config.learning_rate);
    put(out, model.config.clip_norm);
    put<std::uint64_t>(out, model.scale.features());
    for (double v : model.scale.min) put(out, v);
    for (double v : model.scale.max) put(out, v);
    const VectorXd flat = model.weights.flatten();
    for (Index k = 0; k < flat.size(); ++k) put(out, flat(k));
    io::write_file_atomic(path, out);
}

Model load(const std::filesystem::path& path) {
    Reader in(io::read_file(path));
    if (in.bytes().size() < sizeof(kMagic) || std::memcmp(in.bytes().data(), kMagic, sizeof(kMagic)) != 0) {
        throw DataError(path.string() + " is not an LSTM model file");
    }
    for (std::size_t k = 0; k < sizeof(kMagic); ++k) in.get<char>();
    if (const auto v = in.get<std::uint32_t>(); v != kVersion) {
        throw DataError("unsupported LSTM model version " + std::to_string(v));
    }
    Model m;
    Dims d;
    d.hidden = in.size();
    d.input = in.size();
    d.horizon = in.size();
    m.lookback = in.size();
    m.target_col = in.size();
    m.input_cols.resize(in.size(1u << 16));
    for (auto& c : m.input_cols) c = in.size();
    m.config.hidden = d.hidden;
    m.config.epochs = in.size(std::numeric_limits<std::uint64_t>::max());
    m.config.batch_size = in.size(std::numeric_limits<std::uint64_t>::max());
    m.config.seed = in.get<std::uint64_t>();
    m.config.learning_rate = in.get<double>();
    m.config.clip_norm = in.get<double>();
    const std::size_t n_scale = in.size(1u << 16);
    m.scale.min.resize(n_scale);
    m.scale.max.resize(n_scale);
    for (auto& v : m.scale.min) v = in.get<double>();
    for (auto& v : m.scale.max) v = in.get<double>();
    Weights shape = Weights::zeros(d);
    VectorXd flat(idx(shape.parameter_count()));
    for (Index k = 0; k < flat.size(); ++k) flat(k) = in.get<double>();
    if (!in.at_end()) throw DataError("trailing bytes in LSTM model file");
    m.weights = Weights::unflatten(d, flat);
    return m;
}

}  // namespace stockcast::lstm
