#include "qreform/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "qreform/errors.hpp"
#include "qreform/hash.hpp"
#include "transformer.hpp"

namespace qreform {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'Q', 'R', 'F', 'M', 'C', 'K', 'P', 'T'};
constexpr int kCheckpointVersion = 1;

nlohmann::json config_to_json(const ModelConfig& c)
{
    return {{"embed_dim", c.embed_dim},       {"layers", c.layers},
            {"heads", c.heads},               {"feedforward_dim", c.feedforward_dim},
            {"max_input_len", c.max_input_len}, {"dropout", c.dropout},
            {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j)
{
    ModelConfig c;
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.feedforward_dim = j.at("feedforward_dim").get<std::size_t>();
    c.max_input_len = j.at("max_input_len").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

void check_sample(const CorruptedSample& s, std::size_t vocab)
{
    auto in_range = [vocab](TokenId id) {
        return id >= 0 && static_cast<std::size_t>(id) < vocab;
    };
    if (!std::all_of(s.corrupted.begin(), s.corrupted.end(), in_range)
        || !std::all_of(s.target_span.begin(), s.target_span.end(), in_range)) {
        throw Error(ErrorKind::VocabMismatch, "training sample has token ids outside the model vocabulary");
    }
}

std::size_t target_tokens(std::span<const CorruptedSample> samples)
{
    std::size_t n = 0;
    for (const auto& s : samples) {
        n += s.target_span.size() + 1;
    }
    return n;
}

}  // namespace

void ModelConfig::validate() const
{
    if (embed_dim == 0 || layers == 0 || heads == 0 || feedforward_dim == 0 || max_input_len == 0) {
        throw Error(ErrorKind::ConfigError, "model dimensions must all be at least 1");
    }
    if (embed_dim % heads != 0) {
        throw Error(ErrorKind::ConfigError, "embed_dim " + std::to_string(embed_dim)
                                                + " is not divisible by heads " + std::to_string(heads));
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw Error(ErrorKind::ConfigError, "dropout must lie in [0, 1)");
    }
}

void TrainConfig::validate() const
{
    if (epochs == 0 || batch_size == 0) {
        throw Error(ErrorKind::ConfigError, "epochs and batch_size must be at least 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw Error(ErrorKind::ConfigError, "learning_rate must be positive");
    }
    if (grad_clip && !(*grad_clip > 0.0)) {
        throw Error(ErrorKind::ConfigError, "grad_clip must be positive when set");
    }
}

struct InfillModel::Impl {
    ModelConfig config;
    detail::Layout layout;
    detail::ParamBuffer params;
};

InfillModel::InfillModel(const ModelConfig& config, std::size_t vocab_size)
{
    config.validate();
    if (vocab_size <= kReservedCount) {
        throw Error(ErrorKind::ConfigError, "vocabulary must contain at least one content token");
    }
    impl_ = std::make_unique<Impl>();
    impl_->config = config;
    impl_->layout = detail::Layout::make(config, vocab_size);
    impl_->params.assign(impl_->layout.total, 0.0);
    detail::initialize(impl_->layout, config.seed, impl_->params);
}

InfillModel::~InfillModel() = default;
InfillModel::InfillModel(InfillModel&&) noexcept = default;
InfillModel& InfillModel::operator=(InfillModel&&) noexcept = default;
InfillModel::InfillModel(const InfillModel& other) : impl_(std::make_unique<Impl>(*other.impl_)) {}

const ModelConfig& InfillModel::config() const noexcept { return impl_->config; }
std::size_t InfillModel::vocab_size() const { return impl_->layout.vocab; }
std::span<const double> InfillModel::parameters() const noexcept { return impl_->params; }
std::span<double> InfillModel::mutable_parameters() noexcept { return impl_->params; }

std::vector<InfillModel::TensorInfo> InfillModel::tensors() const
{
    std::vector<TensorInfo> out;
    for (const auto& nb : impl_->layout.named) {
        out.push_back({nb.name, nb.block.offset, nb.block.size()});
    }
    return out;
}

void InfillModel::zero_output_head()
{
    const auto& head = impl_->layout.head;
    for (const auto* b : {&head.w, &head.b}) {
        std::fill_n(impl_->params.begin() + static_cast<std::ptrdiff_t>(b->offset), b->size(), 0.0);
    }
}

TrainReport InfillModel::train(std::span<const CorruptedSample> samples, const TrainConfig& config)
{
    std::vector<CorruptedSample> fixed(samples.begin(), samples.end());
    return train([&fixed](std::size_t) { return fixed; }, config);
}

TrainReport InfillModel::train_cqc(std::span<const TokenIds> queries, const TrainConfig& config)
{
    const std::uint64_t seed = impl_->config.seed;
    return train([queries, seed](std::size_t epoch) { return make_training_pairs(queries, seed, epoch); },
                 config);
}

TrainReport InfillModel::train(const SampleSource& source, const TrainConfig& config,
                               const EpochCallback& on_epoch)
{
    config.validate();
    auto& params = impl_->params;
    const auto& layout = impl_->layout;
    const std::size_t n_params = params.size();

    detail::ParamBuffer grad(n_params, 0.0);
    std::vector<double> m1;
    std::vector<double> m2;
    if (config.optimizer == OptimizerKind::Adam) {
        m1.assign(n_params, 0.0);
        m2.assign(n_params, 0.0);
    }
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double adam_eps = 1e-8;

    std::mt19937_64 dropout_rng(derive_seed(impl_->config.seed, 0xD50u));
    TrainReport report;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const std::vector<CorruptedSample> samples = source(epoch);
        if (samples.empty()) {
            throw Error(ErrorKind::ConfigError, "training requires at least one sample");
        }
        for (const auto& s : samples) {
            check_sample(s, layout.vocab);
        }

        std::vector<std::size_t> order(samples.size());
        std::iota(order.begin(), order.end(), 0);
        if (config.shuffle) {
            std::mt19937_64 rng(derive_seed(impl_->config.seed, 0x5u, epoch));
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[rng() % i]);
            }
        }

        double epoch_loss = 0.0;
        std::size_t epoch_tokens = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::size_t batch_tokens = 0;
            for (std::size_t i = start; i < end; ++i) {
                batch_tokens += samples[order[i]].target_span.size() + 1;
            }
            const double weight = 1.0 / static_cast<double>(batch_tokens);

            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = start; i < end; ++i) {
                epoch_loss += detail::sample_loss(layout, params, samples[order[i]], weight, grad,
                                                  impl_->config.dropout, &dropout_rng);
            }
            epoch_tokens += batch_tokens;

            if (config.grad_clip) {
                double sq = 0.0;
                for (double g : grad) {
                    sq += g * g;
                }
                const double norm = std::sqrt(sq);
                if (norm > *config.grad_clip) {
                    const double scale = *config.grad_clip / norm;
                    for (double& g : grad) {
                        g *= scale;
                    }
                }
            }

            ++report.steps;
            if (config.optimizer == OptimizerKind::Adam) {
                const double t = static_cast<double>(report.steps);
                const double c1 = 1.0 - std::pow(beta1, t);
                const double c2 = 1.0 - std::pow(beta2, t);
                for (std::size_t i = 0; i < n_params; ++i) {
                    m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                    m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                    params[i] -= config.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + adam_eps);
                }
            } else {
                for (std::size_t i = 0; i < n_params; ++i) {
                    params[i] -= config.learning_rate * grad[i];
                }
            }
        }
        const double mean = epoch_loss / static_cast<double>(epoch_tokens);
        report.per_epoch_loss.push_back(mean);
        if (on_epoch) {
            on_epoch(epoch, mean);
        }
    }
    return report;
}

double InfillModel::loss(std::span<const CorruptedSample> samples) const
{
    if (samples.empty()) {
        throw Error(ErrorKind::ConfigError, "loss requires at least one sample");
    }
    double total = 0.0;
    for (const auto& s : samples) {
        total += detail::sample_loss(impl_->layout, impl_->params, s, 0.0, {}, 0.0, nullptr);
    }
    return total / static_cast<double>(target_tokens(samples));
}

double InfillModel::loss_and_gradient(std::span<const CorruptedSample> samples,
                                      std::span<double> gradient) const
{
    if (samples.empty()) {
        throw Error(ErrorKind::ConfigError, "loss requires at least one sample");
    }
    if (gradient.size() != impl_->params.size()) {
        throw Error(ErrorKind::ConfigError, "gradient buffer size does not match the parameter count");
    }
    detail::ParamBuffer grad(gradient.size(), 0.0);
    const double weight = 1.0 / static_cast<double>(target_tokens(samples));
    double total = 0.0;
    for (const auto& s : samples) {
        total += detail::sample_loss(impl_->layout, impl_->params, s, weight, grad, 0.0, nullptr);
    }
    std::copy(grad.begin(), grad.end(), gradient.begin());
    return total * weight;
}

SpanPrediction InfillModel::infill(std::span<const TokenId> corrupted, std::size_t max_span,
                                   const DecodeOptions& decode) const
{
    if (std::count(corrupted.begin(), corrupted.end(), kMaskId) != 1) {
        throw Error(ErrorKind::MalformedInput, "infill input must contain exactly one MASK");
    }
    if (max_span == 0 || max_span > impl_->config.max_input_len) {
        throw Error(ErrorKind::ConfigError, "span cap must lie in [1, max_input_len]");
    }
    const auto& layout = impl_->layout;
    const detail::Mat memory = detail::encode(layout, impl_->params, corrupted);

    std::mt19937_64 rng(decode.seed);
    SpanPrediction pred;
    TokenIds prefix{kSpanStartId};
    for (std::size_t step = 0; step < max_span; ++step) {
        std::vector<double> dist = detail::next_distribution(layout, impl_->params, memory, prefix);
        TokenId chosen = 0;
        if (decode.sample) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            double acc = 0.0;
            chosen = static_cast<TokenId>(dist.size() - 1);
            for (std::size_t v = 0; v < dist.size(); ++v) {
                acc += dist[v];
                if (u < acc) {
                    chosen = static_cast<TokenId>(v);
                    break;
                }
            }
        } else {
            // max_element returns the first maximum, i.e. the lowest id on ties
            chosen = static_cast<TokenId>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        }
        pred.distributions.push_back(std::move(dist));
        if (chosen == kSpanEndId) {
            pred.terminated = true;
            break;
        }
        pred.span.push_back(chosen);
        prefix.push_back(chosen);
    }
    return pred;
}

void InfillModel::save(const std::filesystem::path& path, std::uint64_t vocab_hash) const
{
    const nlohmann::json header = {
        {"format", "qreform-checkpoint"},
        {"version", kCheckpointVersion},
        {"config", config_to_json(impl_->config)},
        {"vocab_size", impl_->layout.vocab},
        {"vocab_hash", to_hex(vocab_hash)},
        {"parameter_count", impl_->params.size()},
        {"dtype", "float64"},
        {"byte_order", "little"},
    };
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::Io, "cannot write checkpoint " + path.string());
    }
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(impl_->params.data()),
              static_cast<std::streamsize>(impl_->params.size() * sizeof(double)));
    if (!out) {
        throw Error(ErrorKind::Io, "failed writing checkpoint " + path.string());
    }
}

InfillModel InfillModel::load(const std::filesystem::path& path, std::uint64_t expected_vocab_hash)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open checkpoint " + path.string());
    }
    char magic[sizeof kMagic];
    std::uint64_t len = 0;
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0
        || !in.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1u << 20)) {
        throw Error(ErrorKind::MalformedInput, path.string() + " is not a qreform checkpoint");
    }
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
        throw Error(ErrorKind::MalformedInput, "truncated checkpoint header");
    }
    nlohmann::json header;
    ModelConfig config;
    std::size_t vocab_size = 0;
    std::size_t count = 0;
    std::string stored_hash;
    try {
        header = nlohmann::json::parse(text);
        if (header.at("version").get<int>() != kCheckpointVersion) {
            throw Error(ErrorKind::MalformedInput, "unsupported checkpoint version");
        }
        config = config_from_json(header.at("config"));
        vocab_size = header.at("vocab_size").get<std::size_t>();
        count = header.at("parameter_count").get<std::size_t>();
        stored_hash = header.at("vocab_hash").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("bad checkpoint header: ") + e.what());
    }
    if (stored_hash != to_hex(expected_vocab_hash)) {
        throw Error(ErrorKind::VocabMismatch, "checkpoint was trained with vocabulary " + stored_hash
                                                  + ", got " + to_hex(expected_vocab_hash));
    }
    InfillModel model(config, vocab_size);
    if (count != model.impl_->params.size()) {
        throw Error(ErrorKind::MalformedInput, "checkpoint parameter count does not match its config");
    }
    if (!in.read(reinterpret_cast<char*>(model.impl_->params.data()),
                 static_cast<std::streamsize>(count * sizeof(double)))) {
        throw Error(ErrorKind::MalformedInput, "truncated checkpoint parameters");
    }
    return model;
}

}  // namespace qreform
