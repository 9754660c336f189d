#include "geoloop/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace geoloop {

using ad::Tape;
using ad::Tensor;
using ad::Var;

void SurrogateConfig::validate() const {
    if (latent_dim < 1) throw ContractError("SurrogateConfig: latent_dim must be >= 1");
    if (encoder_channels.empty())
        throw ContractError("SurrogateConfig: encoder_channels must be nonempty");
    if (kernel < 1 || stride < 1 || pad < 0)
        throw ContractError("SurrogateConfig: bad conv geometry");
    if (lstm_hidden < 1) throw ContractError("SurrogateConfig: lstm_hidden must be >= 1");
    if (epochs < 1) throw ContractError("SurrogateConfig: epochs must be >= 1");
    if (!(learning_rate > 0)) throw ContractError("SurrogateConfig: learning_rate must be > 0");
    if (batch_size < 1) throw ContractError("SurrogateConfig: batch_size must be >= 1");
    if (!(field_std > 0)) throw ContractError("SurrogateConfig: field_std must be > 0");
}

void to_json(json& j, const SurrogateConfig& c) {
    j = json{{"latent_dim", c.latent_dim},
             {"encoder_channels", c.encoder_channels},
             {"kernel", c.kernel},
             {"stride", c.stride},
             {"pad", c.pad},
             {"lstm_hidden", c.lstm_hidden},
             {"epochs", c.epochs},
             {"learning_rate", c.learning_rate},
             {"batch_size", c.batch_size},
             {"seed", c.seed},
             {"field_mean", c.field_mean},
             {"field_std", c.field_std},
             {"bounds", c.bounds}};
}

void from_json(const json& j, SurrogateConfig& c) {
    c.latent_dim = j.at("latent_dim").get<int>();
    c.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
    c.kernel = j.value("kernel", 3);
    c.stride = j.value("stride", 2);
    c.pad = j.value("pad", 1);
    c.lstm_hidden = j.at("lstm_hidden").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.value("batch_size", 32);
    c.seed = j.value("seed", std::uint64_t{0});
    c.field_mean = j.value("field_mean", 3.6);
    c.field_std = j.value("field_std", 1.0);
    if (j.contains("bounds")) c.bounds = j.at("bounds").get<ScheduleBounds>();
}

Eigen::MatrixXd OutputNorm::normalize(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
        const double range = hi(c) - lo(c);
        if (range < 1e-12)
            out.row(c).setZero();
        else
            out.row(c) = (x.row(c).array() - lo(c)) / range;
    }
    return out;
}

Eigen::MatrixXd OutputNorm::denormalize(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
        const double range = hi(c) - lo(c);
        if (range < 1e-12)
            out.row(c).setConstant(lo(c));
        else
            out.row(c) = x.row(c).array() * range + lo(c);
    }
    return out;
}

Eigen::MatrixXd SurrogateModel::output_channels(const ProductionSeries& series) {
    const auto n_prod = series.producer_rates.rows();
    const auto n_inj = series.injector_bhps.rows();
    const auto n_steps = series.producer_rates.cols();
    Eigen::MatrixXd out(2 * n_prod + n_inj, n_steps);
    out.topRows(n_prod) = series.producer_rates;
    out.middleRows(n_prod, n_prod) = series.producer_temps;
    out.bottomRows(n_inj) = series.injector_bhps;
    return out;
}

std::vector<std::string> SurrogateModel::channel_names() const {
    std::vector<std::string> names;
    for (int w = 0; w < n_prod_; ++w) names.push_back("prod_rate_" + std::to_string(w));
    for (int w = 0; w < n_prod_; ++w) names.push_back("prod_temp_" + std::to_string(w));
    for (int w = 0; w < n_inj_; ++w) names.push_back("inj_bhp_" + std::to_string(w));
    return names;
}

std::string sample_identity_hash(const PermField& field, const ControlSchedule& schedule) {
    std::string acc = hash_bytes(field.lnk.data(), field.lnk.size() * sizeof(double));
    acc += hash_bytes(schedule.injector_rates.data(),
                      static_cast<std::size_t>(schedule.injector_rates.size()) * sizeof(double));
    acc += hash_bytes(schedule.producer_bhps.data(),
                      static_cast<std::size_t>(schedule.producer_bhps.size()) * sizeof(double));
    return hash_bytes(acc.data(), acc.size());
}

// ---------------------------------------------------------------------------
// graph construction

struct SurrogateGraph {
    const SurrogateModel& model;
    Tape& tape;
    bool training;

    // spatial dimension chain of the encoder, entry 0 is the grid
    std::vector<std::array<int, 2>> dims; // {h, w}

    SurrogateGraph(const SurrogateModel& m, Tape& t, bool train) : model(m), tape(t), training(train) {
        const auto& c = model.config_;
        dims.push_back({model.grid_.ny, model.grid_.nx});
        for (std::size_t l = 0; l < c.encoder_channels.size(); ++l)
            dims.push_back({ad::conv_out_dim(dims.back()[0], c.kernel, c.stride, c.pad),
                            ad::conv_out_dim(dims.back()[1], c.kernel, c.stride, c.pad)});
    }

    Var param(const std::string& name) {
        auto& p = const_cast<SurrogateModel&>(model).params_.find(name);
        if (training) return tape.leaf(&p.value, &p.grad);
        return tape.input(p.value);
    }

    Var encode(Var fields) {
        const auto& c = model.config_;
        Var h = fields;
        for (std::size_t l = 0; l < c.encoder_channels.size(); ++l) {
            h = tape.conv2d(h, param("enc_conv" + std::to_string(l) + "_w"),
                            param("enc_conv" + std::to_string(l) + "_b"), c.stride, c.pad);
            h = tape.relu(h);
        }
        const auto B = fields->value.dim(0);
        const std::int64_t flat =
            static_cast<std::int64_t>(c.encoder_channels.back()) * dims.back()[0] * dims.back()[1];
        h = tape.reshape(h, {B, flat});
        return tape.add_row_broadcast(tape.matmul(h, param("enc_dense_w")), param("enc_dense_b"));
    }

    Var decode(Var latent) {
        const auto& c = model.config_;
        const auto B = latent->value.dim(0);
        const int n_layers = static_cast<int>(c.encoder_channels.size());
        Var h = tape.relu(tape.add_row_broadcast(tape.matmul(latent, param("dec_dense_w")),
                                                 param("dec_dense_b")));
        h = tape.reshape(h, {B, c.encoder_channels.back(), dims.back()[0], dims.back()[1]});
        for (int l = n_layers - 1; l >= 0; --l) {
            h = tape.conv2d_transpose(h, param("dec_conv" + std::to_string(l) + "_w"),
                                      param("dec_conv" + std::to_string(l) + "_b"), c.stride,
                                      c.pad, dims[static_cast<std::size_t>(l)][0],
                                      dims[static_cast<std::size_t>(l)][1]);
            if (l > 0) h = tape.relu(h);
        }
        return h; // [B,1,H,W], standardized lnK
    }

    // latent [B,L]; controls_per_step [B, n_inj+n_prod] normalized
    std::vector<Var> sequence(Var latent, const std::vector<Tensor>& controls_per_step) {
        const auto& c = model.config_;
        const auto B = latent->value.dim(0);
        Var w = param("lstm_w");
        Var b = param("lstm_b");
        Var head_w = param("head_w");
        Var head_b = param("head_b");
        Var h = tape.input(Tensor({B, c.lstm_hidden}));
        Var cc = tape.input(Tensor({B, c.lstm_hidden}));
        std::vector<Var> outputs;
        outputs.reserve(controls_per_step.size());
        for (const auto& controls : controls_per_step) {
            Var x = tape.concat_cols(latent, tape.input(controls));
            auto [hn, cn] = ad::lstm_cell(tape, x, h, cc, w, b);
            h = hn;
            cc = cn;
            outputs.push_back(
                tape.add_row_broadcast(tape.matmul(h, head_w), head_b)); // [B, n_ch]
        }
        return outputs;
    }
};

// ---------------------------------------------------------------------------

void SurrogateModel::build_params(Rng& rng) {
    const auto& c = config_;
    std::vector<std::array<int, 2>> dims{{grid_.ny, grid_.nx}};
    for (std::size_t l = 0; l < c.encoder_channels.size(); ++l)
        dims.push_back({ad::conv_out_dim(dims.back()[0], c.kernel, c.stride, c.pad),
                        ad::conv_out_dim(dims.back()[1], c.kernel, c.stride, c.pad)});
    if (dims.back()[0] < 1 || dims.back()[1] < 1)
        throw ContractError("surrogate: encoder collapses the grid to nothing");

    int in_ch = 1;
    for (std::size_t l = 0; l < c.encoder_channels.size(); ++l) {
        const int out_ch = c.encoder_channels[l];
        auto& w = params_.add("enc_conv" + std::to_string(l) + "_w",
                              {out_ch, in_ch, c.kernel, c.kernel});
        ad::init_uniform_fan_in(w.value, static_cast<std::int64_t>(in_ch) * c.kernel * c.kernel,
                                rng);
        params_.add("enc_conv" + std::to_string(l) + "_b", {out_ch});
        in_ch = out_ch;
    }
    const std::int64_t flat =
        static_cast<std::int64_t>(c.encoder_channels.back()) * dims.back()[0] * dims.back()[1];
    auto& enc_dw = params_.add("enc_dense_w", {flat, c.latent_dim});
    ad::init_uniform_fan_in(enc_dw.value, flat, rng);
    params_.add("enc_dense_b", {c.latent_dim});

    auto& dec_dw = params_.add("dec_dense_w", {c.latent_dim, flat});
    ad::init_uniform_fan_in(dec_dw.value, c.latent_dim, rng);
    params_.add("dec_dense_b", {flat});
    for (int l = static_cast<int>(c.encoder_channels.size()) - 1; l >= 0; --l) {
        const int f_ch = c.encoder_channels[static_cast<std::size_t>(l)];
        const int out_ch = l > 0 ? c.encoder_channels[static_cast<std::size_t>(l - 1)] : 1;
        auto& w = params_.add("dec_conv" + std::to_string(l) + "_w",
                              {f_ch, out_ch, c.kernel, c.kernel});
        ad::init_uniform_fan_in(w.value, static_cast<std::int64_t>(f_ch) * c.kernel * c.kernel,
                                rng);
        params_.add("dec_conv" + std::to_string(l) + "_b", {out_ch});
    }

    const int n_wells = n_inj_ + n_prod_;
    const std::int64_t lstm_in = c.latent_dim + n_wells + c.lstm_hidden;
    auto& lw = params_.add("lstm_w", {lstm_in, 4 * c.lstm_hidden});
    ad::init_uniform_fan_in(lw.value, lstm_in, rng);
    auto& lb = params_.add("lstm_b", {4 * c.lstm_hidden});
    lb.value.data.segment(c.lstm_hidden, c.lstm_hidden).setConstant(1.0); // forget gate
    auto& hw = params_.add("head_w", {c.lstm_hidden, n_channels()});
    ad::init_uniform_fan_in(hw.value, c.lstm_hidden, rng);
    params_.add("head_b", {n_channels()});
}

namespace {
Tensor fields_tensor(const std::vector<const PermField*>& fields, const GridSpec& grid,
                     double mean, double std) {
    const auto B = static_cast<std::int64_t>(fields.size());
    Tensor t({B, 1, grid.ny, grid.nx});
    for (std::int64_t b = 0; b < B; ++b) {
        if (fields[static_cast<std::size_t>(b)]->grid != grid)
            throw ContractError("surrogate: field grid differs from training grid");
        const auto& lnk = fields[static_cast<std::size_t>(b)]->lnk;
        for (std::size_t i = 0; i < lnk.size(); ++i)
            t.data[b * static_cast<std::int64_t>(lnk.size()) + static_cast<std::int64_t>(i)] =
                (lnk[i] - mean) / std;
    }
    return t;
}

// normalized well controls at one step, same layout for every sample row
std::vector<Tensor> controls_tensors(const ControlSchedule& schedule, std::int64_t batch,
                                     const ScheduleBounds& bounds) {
    const auto n_inj = schedule.injector_rates.rows();
    const auto n_prod = schedule.producer_bhps.rows();
    const double rate_range = bounds.rate_hi - bounds.rate_lo;
    const double bhp_range = bounds.bhp_hi - bounds.bhp_lo;
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(schedule.n_steps));
    for (int t = 0; t < schedule.n_steps; ++t) {
        Tensor c({batch, n_inj + n_prod});
        for (std::int64_t b = 0; b < batch; ++b) {
            for (Eigen::Index w = 0; w < n_inj; ++w)
                c.data[b * (n_inj + n_prod) + w] =
                    rate_range > 0 ? (schedule.injector_rates(w, t) - bounds.rate_lo) / rate_range
                                   : 0.5;
            for (Eigen::Index w = 0; w < n_prod; ++w)
                c.data[b * (n_inj + n_prod) + n_inj + w] =
                    bhp_range > 0 ? (schedule.producer_bhps(w, t) - bounds.bhp_lo) / bhp_range
                                  : 0.5;
        }
        out.push_back(std::move(c));
    }
    return out;
}
} // namespace

SurrogateModel SurrogateModel::train(const SimDataset& dataset, const SurrogateConfig& config) {
    config.validate();
    if (dataset.samples.empty()) throw ContractError("surrogate train: empty dataset");

    SurrogateModel model;
    model.config_ = config;
    model.grid_ = dataset.spec.grid;
    model.n_inj_ = count_injectors(dataset.wells);
    model.n_prod_ = count_producers(dataset.wells);
    model.n_steps_ = dataset.samples.front().series.n_steps();
    model.step_days_ = dataset.samples.front().schedule.step_days;
    for (const auto& s : dataset.samples) {
        if (s.field.grid != model.grid_ || s.series.n_steps() != model.n_steps_ ||
            s.schedule.injector_rates.rows() != model.n_inj_ ||
            s.schedule.producer_bhps.rows() != model.n_prod_)
            throw ContractError("surrogate train: inconsistent sample shapes");
    }

    const std::size_t n = dataset.samples.size();
    const int n_ch = model.n_channels();

    // normalization stats from the training split only
    model.norm_.lo = Eigen::VectorXd::Constant(n_ch, std::numeric_limits<double>::infinity());
    model.norm_.hi = Eigen::VectorXd::Constant(n_ch, -std::numeric_limits<double>::infinity());
    std::vector<Eigen::MatrixXd> raw_outputs;
    raw_outputs.reserve(n);
    for (const auto& s : dataset.samples) {
        raw_outputs.push_back(output_channels(s.series));
        model.norm_.lo = model.norm_.lo.cwiseMin(raw_outputs.back().rowwise().minCoeff());
        model.norm_.hi = model.norm_.hi.cwiseMax(raw_outputs.back().rowwise().maxCoeff());
    }
    std::vector<Eigen::MatrixXd> targets;
    targets.reserve(n);
    for (const auto& m : raw_outputs) targets.push_back(model.norm_.normalize(m));

    model.train_hashes_.reserve(n);
    for (const auto& s : dataset.samples)
        model.train_hashes_.push_back(sample_identity_hash(s.field, s.schedule));

    Rng rng(split_seed(config.seed, "surrogate_init"));
    model.build_params(rng);

    Rng shuffle_rng(split_seed(config.seed, "surrogate_shuffle"));
    ad::AdamState adam;
    adam.learning_rate = config.learning_rate;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with the dedicated stream
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = shuffle_rng.index(i);
            std::swap(order[i - 1], order[j]);
        }
        double recon_sum = 0.0, seque_sum = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t B = std::min(static_cast<std::size_t>(config.batch_size), n - start);
            std::vector<const PermField*> batch_fields;
            batch_fields.reserve(B);
            for (std::size_t b = 0; b < B; ++b)
                batch_fields.push_back(&dataset.samples[order[start + b]].field);
            Tensor fields =
                fields_tensor(batch_fields, model.grid_, config.field_mean, config.field_std);

            // per-step controls and targets for this batch
            std::vector<Tensor> controls(static_cast<std::size_t>(model.n_steps_));
            std::vector<Tensor> step_targets(static_cast<std::size_t>(model.n_steps_));
            const int n_wells = model.n_inj_ + model.n_prod_;
            for (int t = 0; t < model.n_steps_; ++t) {
                controls[static_cast<std::size_t>(t)] =
                    Tensor({static_cast<std::int64_t>(B), n_wells});
                step_targets[static_cast<std::size_t>(t)] =
                    Tensor({static_cast<std::int64_t>(B), n_ch});
            }
            const double rate_range = config.bounds.rate_hi - config.bounds.rate_lo;
            const double bhp_range = config.bounds.bhp_hi - config.bounds.bhp_lo;
            for (std::size_t b = 0; b < B; ++b) {
                const auto& sched = dataset.samples[order[start + b]].schedule;
                const auto& target = targets[order[start + b]];
                for (int t = 0; t < model.n_steps_; ++t) {
                    auto& ct = controls[static_cast<std::size_t>(t)];
                    for (int w = 0; w < model.n_inj_; ++w)
                        ct.data[static_cast<std::int64_t>(b) * n_wells + w] =
                            rate_range > 0
                                ? (sched.injector_rates(w, t) - config.bounds.rate_lo) / rate_range
                                : 0.5;
                    for (int w = 0; w < model.n_prod_; ++w)
                        ct.data[static_cast<std::int64_t>(b) * n_wells + model.n_inj_ + w] =
                            bhp_range > 0
                                ? (sched.producer_bhps(w, t) - config.bounds.bhp_lo) / bhp_range
                                : 0.5;
                    auto& tt = step_targets[static_cast<std::size_t>(t)];
                    for (int c = 0; c < n_ch; ++c)
                        tt.data[static_cast<std::int64_t>(b) * n_ch + c] = target(c, t);
                }
            }

            Tape tape;
            SurrogateGraph graph(model, tape, true);
            Var field_input = tape.input(fields);
            Var latent = graph.encode(field_input);
            Var recon = graph.decode(latent);
            std::vector<Var> preds = graph.sequence(latent, controls);

            Var l_recon = tape.scale(tape.sum_squared(tape.sub(recon, field_input)),
                                     1.0 / static_cast<double>(B));
            Var l_seque = nullptr;
            for (int t = 0; t < model.n_steps_; ++t) {
                Var term = tape.sum_squared(
                    tape.sub(preds[static_cast<std::size_t>(t)],
                             tape.input(step_targets[static_cast<std::size_t>(t)])));
                l_seque = l_seque ? tape.add(l_seque, term) : term;
            }
            l_seque = tape.scale(l_seque, 1.0 / (static_cast<double>(B) * model.n_steps_));
            Var total = tape.add(l_recon, l_seque);

            const double recon_v = l_recon->value.data[0];
            const double seque_v = l_seque->value.data[0];
            if (!std::isfinite(total->value.data[0]))
                throw std::runtime_error("surrogate train: NaN loss at epoch " +
                                         std::to_string(epoch) + ", batch offset " +
                                         std::to_string(start));

            model.params_.zero_grads();
            tape.backward(total);
            ad::adam_step(adam, model.params_);

            recon_sum += recon_v * static_cast<double>(B);
            seque_sum += seque_v * static_cast<double>(B);
        }
        model.history_recon_.push_back(recon_sum / static_cast<double>(n));
        model.history_seque_.push_back(seque_sum / static_cast<double>(n));
        model.history_total_.push_back(model.history_recon_.back() +
                                       model.history_seque_.back());
    }

    if (config.epochs >= 2) {
        if (!(model.history_recon_.back() < model.history_recon_.front()) ||
            !(model.history_seque_.back() < model.history_seque_.front()))
            throw std::runtime_error(
                "surrogate train: loss did not decrease from its first-epoch value "
                "(recon " + std::to_string(model.history_recon_.front()) + " -> " +
                std::to_string(model.history_recon_.back()) + ", seque " +
                std::to_string(model.history_seque_.front()) + " -> " +
                std::to_string(model.history_seque_.back()) + ")");
    }
    return model;
}

Eigen::MatrixXd SurrogateModel::encode_batch(const std::vector<const PermField*>& fields) const {
    Tape tape;
    SurrogateGraph graph(*this, tape, false);
    Var latent = graph.encode(
        tape.input(fields_tensor(fields, grid_, config_.field_mean, config_.field_std)));
    return latent->value.mat(static_cast<std::int64_t>(fields.size()), config_.latent_dim);
}

Eigen::VectorXd SurrogateModel::encode(const PermField& field) const {
    return encode_batch({&field}).row(0).transpose();
}

PermField SurrogateModel::reconstruct(const PermField& field) const {
    Tape tape;
    SurrogateGraph graph(*this, tape, false);
    Var latent = graph.encode(
        tape.input(fields_tensor({&field}, grid_, config_.field_mean, config_.field_std)));
    Var recon = graph.decode(latent);
    PermField out;
    out.grid = grid_;
    out.lnk.resize(static_cast<std::size_t>(grid_.n_cells()));
    for (int i = 0; i < grid_.n_cells(); ++i)
        out.lnk[static_cast<std::size_t>(i)] =
            recon->value.data[i] * config_.field_std + config_.field_mean;
    return out;
}

std::vector<ProductionSeries> SurrogateModel::predict_from_latents(
    const Eigen::MatrixXd& latents, const ControlSchedule& schedule) const {
    if (latents.cols() != config_.latent_dim)
        throw ContractError("predict_from_latents: latent width mismatch");
    schedule.validate_shape(n_inj_, n_prod_);
    if (schedule.n_steps != n_steps_)
        throw ContractError("surrogate: schedule length " + std::to_string(schedule.n_steps) +
                            " != trained sequence length " + std::to_string(n_steps_));
    const auto B = latents.rows();

    Tape tape;
    SurrogateGraph graph(*this, tape, false);
    Tensor latent_in({B, config_.latent_dim});
    for (Eigen::Index b = 0; b < B; ++b)
        for (int l = 0; l < config_.latent_dim; ++l)
            latent_in.data[b * config_.latent_dim + l] = latents(b, l);
    std::vector<Var> preds =
        graph.sequence(tape.input(std::move(latent_in)), controls_tensors(schedule, B, config_.bounds));

    std::vector<ProductionSeries> out(static_cast<std::size_t>(B));
    const int n_ch = n_channels();
    for (Eigen::Index b = 0; b < B; ++b) {
        Eigen::MatrixXd normalized(n_ch, n_steps_);
        for (int t = 0; t < n_steps_; ++t)
            for (int c = 0; c < n_ch; ++c)
                normalized(c, t) =
                    preds[static_cast<std::size_t>(t)]->value.data[b * n_ch + c];
        const Eigen::MatrixXd channels = norm_.denormalize(normalized);
        auto& s = out[static_cast<std::size_t>(b)];
        for (int t = 0; t < n_steps_; ++t)
            s.times.push_back((t + 1) * schedule.step_days);
        s.producer_rates = channels.topRows(n_prod_);
        s.producer_temps = channels.middleRows(n_prod_, n_prod_);
        s.injector_bhps = channels.bottomRows(n_inj_);
        s.producer_bhps = schedule.producer_bhps;
        s.injector_rates = schedule.injector_rates;
    }
    return out;
}

ProductionSeries SurrogateModel::predict(const PermField& field,
                                         const ControlSchedule& schedule) const {
    try {
        schedule.validate_bounds(config_.bounds);
    } catch (const ContractError&) {
        std::cerr << "surrogate: schedule outside trained control bounds, "
                     "prediction is an extrapolation\n";
    }
    const Eigen::MatrixXd latent = encode_batch({&field});
    return predict_from_latents(latent, schedule).front();
}

EvalReport SurrogateModel::evaluate(const SimDataset& dataset) const {
    for (const auto& s : dataset.samples) {
        const std::string h = sample_identity_hash(s.field, s.schedule);
        if (std::find(train_hashes_.begin(), train_hashes_.end(), h) != train_hashes_.end())
            throw ContractError("evaluate: dataset overlaps the training split "
                                "(sample hash " + h + ")");
    }

    const int n_ch = n_channels();
    EvalReport report;
    report.channel_names = channel_names();
    report.scatter.resize(static_cast<std::size_t>(n_ch));

    for (const auto& s : dataset.samples) {
        const Eigen::MatrixXd latent = encode_batch({&s.field});
        const ProductionSeries pred = predict_from_latents(latent, s.schedule).front();
        const Eigen::MatrixXd pc = output_channels(pred);
        const Eigen::MatrixXd rc = output_channels(s.series);
        for (int c = 0; c < n_ch; ++c)
            for (int t = 0; t < n_steps_; ++t)
                report.scatter[static_cast<std::size_t>(c)].push_back(
                    {static_cast<double>(t), rc(c, t), pc(c, t)});
    }

    report.rmse.resize(n_ch);
    report.r2.resize(n_ch);
    report.slope.resize(n_ch);
    for (int c = 0; c < n_ch; ++c) {
        const auto& pts = report.scatter[static_cast<std::size_t>(c)];
        const double n = static_cast<double>(pts.size());
        double ref_mean = 0.0, pred_mean = 0.0;
        for (const auto& p : pts) {
            ref_mean += p[1];
            pred_mean += p[2];
        }
        ref_mean /= n;
        pred_mean /= n;
        double ss_res = 0.0, ss_tot = 0.0, cov = 0.0;
        for (const auto& p : pts) {
            ss_res += (p[2] - p[1]) * (p[2] - p[1]);
            ss_tot += (p[1] - ref_mean) * (p[1] - ref_mean);
            cov += (p[1] - ref_mean) * (p[2] - pred_mean);
        }
        report.rmse(c) = std::sqrt(ss_res / n);
        report.r2(c) = ss_tot > 1e-12 ? 1.0 - ss_res / ss_tot
                                      : (ss_res < 1e-12 ? 1.0 : -std::numeric_limits<double>::infinity());
        report.slope(c) = ss_tot > 1e-12 ? cov / ss_tot : 1.0;
    }
    return report;
}

json EvalReport::to_json_report() const {
    json channels = json::array();
    for (std::size_t c = 0; c < channel_names.size(); ++c)
        channels.push_back(json{{"name", channel_names[c]},
                                {"rmse", rmse(static_cast<Eigen::Index>(c))},
                                {"r2", r2(static_cast<Eigen::Index>(c))},
                                {"slope", slope(static_cast<Eigen::Index>(c))}});
    return json{{"channels", std::move(channels)}};
}

void SurrogateModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json layout = json::array();
    for (const auto& p : params_.params) layout.push_back(json{{"name", p.name}, {"shape", p.value.shape}});
    const std::vector<double> flat = params_.pack_values();
    write_f64_blob(dir / "params.f64", flat, {static_cast<std::int64_t>(flat.size())});

    json manifest{{"kind", "surrogate_checkpoint"},
                  {"config", config_},
                  {"grid", grid_},
                  {"n_inj", n_inj_},
                  {"n_prod", n_prod_},
                  {"n_steps", n_steps_},
                  {"step_days", step_days_},
                  {"norm_lo", std::vector<double>(norm_.lo.data(), norm_.lo.data() + norm_.lo.size())},
                  {"norm_hi", std::vector<double>(norm_.hi.data(), norm_.hi.data() + norm_.hi.size())},
                  {"history_recon", history_recon_},
                  {"history_seque", history_seque_},
                  {"history_total", history_total_},
                  {"train_sample_hashes", train_hashes_},
                  {"param_layout", std::move(layout)},
                  {"params_hash", hash_bytes(flat.data(), flat.size() * sizeof(double))},
                  {"created", manifest_timestamp()}};
    write_json_file(dir / "checkpoint.json", manifest);
}

SurrogateModel SurrogateModel::load(const std::filesystem::path& dir) {
    const json manifest = read_json_file(dir / "checkpoint.json");
    if (manifest.value("kind", "") != "surrogate_checkpoint")
        throw ContractError("not a surrogate checkpoint: " + dir.string());

    SurrogateModel model;
    model.config_ = manifest.at("config").get<SurrogateConfig>();
    model.grid_ = manifest.at("grid").get<GridSpec>();
    model.n_inj_ = manifest.at("n_inj").get<int>();
    model.n_prod_ = manifest.at("n_prod").get<int>();
    model.n_steps_ = manifest.at("n_steps").get<int>();
    model.step_days_ = manifest.at("step_days").get<double>();
    const auto lo = manifest.at("norm_lo").get<std::vector<double>>();
    const auto hi = manifest.at("norm_hi").get<std::vector<double>>();
    model.norm_.lo = Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    model.norm_.hi = Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    model.history_recon_ = manifest.at("history_recon").get<std::vector<double>>();
    model.history_seque_ = manifest.at("history_seque").get<std::vector<double>>();
    model.history_total_ = manifest.at("history_total").get<std::vector<double>>();
    model.train_hashes_ = manifest.at("train_sample_hashes").get<std::vector<std::string>>();

    Rng rng(split_seed(model.config_.seed, "surrogate_init"));
    model.build_params(rng);
    for (std::size_t i = 0; i < model.params_.params.size(); ++i) {
        const auto& entry = manifest.at("param_layout").at(i);
        if (entry.at("name").get<std::string>() != model.params_.params[i].name ||
            entry.at("shape").get<std::vector<std::int64_t>>() != model.params_.params[i].value.shape)
            throw ContractError("checkpoint parameter layout mismatch at index " +
                                std::to_string(i));
    }
    const F64Blob blob = read_f64_blob(dir / "params.f64");
    model.params_.unpack_values(blob.data);
    return model;
}

} // namespace geoloop
