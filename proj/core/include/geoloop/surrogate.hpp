#pragma once

#include "geoloop/autodiff.hpp"
#include "geoloop/dataset.hpp"

namespace geoloop {

struct SurrogateConfig {
    int latent_dim = 32;
    std::vector<int> encoder_channels = {8, 16, 32};
    int kernel = 3;
    int stride = 2;
    int pad = 1;
    int lstm_hidden = 64;
    int epochs = 2000;
    double learning_rate = 1e-3;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double field_mean = 3.6; // lnK standardization
    double field_std = 1.0;
    ScheduleBounds bounds;   // control min-max normalization

    void validate() const;
};

void to_json(json& j, const SurrogateConfig& c);
void from_json(const json& j, SurrogateConfig& c);

// Per-output-channel min-max computed from the training split. Channel
// order: producer rates, producer temperatures, injector BHPs.
struct OutputNorm {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    Eigen::MatrixXd normalize(const Eigen::MatrixXd& channels_by_steps) const;
    Eigen::MatrixXd denormalize(const Eigen::MatrixXd& channels_by_steps) const;
};

struct EvalReport {
    std::vector<std::string> channel_names;
    Eigen::VectorXd rmse;     // per channel, physical units
    Eigen::VectorXd r2;       // per channel, pooled over samples and steps
    Eigen::VectorXd slope;    // least-squares fit of predicted vs reference
    // scatter[c] rows: (step, reference, predicted)
    std::vector<std::vector<std::array<double, 3>>> scatter;

    json to_json_report() const;
};

class SurrogateModel {
public:
    // Joint training on reconstruction + sequence loss; both recorded per
    // epoch. Throws on NaN loss with epoch/batch diagnostics.
    static SurrogateModel train(const SimDataset& dataset, const SurrogateConfig& config);

    Eigen::VectorXd encode(const PermField& field) const;
    Eigen::MatrixXd encode_batch(const std::vector<const PermField*>& fields) const;
    PermField reconstruct(const PermField& field) const;

    ProductionSeries predict(const PermField& field, const ControlSchedule& schedule) const;

    // Hot path for ensemble evaluation: latents row-per-member, one shared
    // schedule, one batched forward pass.
    std::vector<ProductionSeries> predict_from_latents(const Eigen::MatrixXd& latents,
                                                       const ControlSchedule& schedule) const;

    // Refuses datasets sharing any sample with the training split.
    EvalReport evaluate(const SimDataset& dataset) const;

    void save(const std::filesystem::path& dir) const;
    static SurrogateModel load(const std::filesystem::path& dir);

    const SurrogateConfig& config() const { return config_; }
    const OutputNorm& output_norm() const { return norm_; }
    const std::vector<double>& history_recon() const { return history_recon_; }
    const std::vector<double>& history_seque() const { return history_seque_; }
    const std::vector<double>& history_total() const { return history_total_; }
    int n_steps() const { return n_steps_; }
    int n_channels() const { return 2 * n_prod_ + n_inj_; }
    int n_producers() const { return n_prod_; }
    int n_injectors() const { return n_inj_; }
    const GridSpec& grid() const { return grid_; }
    ad::ParamStore& params() { return params_; }
    const std::vector<std::string>& train_sample_hashes() const { return train_hashes_; }

    // target channel matrix (n_channels x n_steps) in physical units
    static Eigen::MatrixXd output_channels(const ProductionSeries& series);
    std::vector<std::string> channel_names() const;

private:
    friend struct SurrogateGraph;
    SurrogateModel() = default;
    void build_params(Rng& rng);

    SurrogateConfig config_;
    GridSpec grid_;
    int n_inj_ = 0;
    int n_prod_ = 0;
    int n_steps_ = 0;
    double step_days_ = 0.0;
    ad::ParamStore params_;
    OutputNorm norm_;
    std::vector<double> history_recon_;
    std::vector<double> history_seque_;
    std::vector<double> history_total_;
    std::vector<std::string> train_hashes_;
};

std::string sample_identity_hash(const PermField& field, const ControlSchedule& schedule);

} // namespace geoloop
