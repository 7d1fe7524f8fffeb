#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qreform/cqc.hpp"
#include "qreform/vocabulary.hpp"

namespace qreform {

struct ModelConfig {
    std::size_t embed_dim = 128;
    std::size_t layers = 2;  // encoder and decoder each
    std::size_t heads = 4;
    std::size_t feedforward_dim = 256;
    std::size_t max_input_len = 64;
    double dropout = 0.0;
    std::uint64_t seed = 101;

    /// Throws ConfigError describing the first violated constraint.
    void validate() const;
};

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
    std::size_t epochs = 3;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::optional<double> grad_clip = 1.0;  // global L2 norm
    OptimizerKind optimizer = OptimizerKind::Adam;
    bool shuffle = true;

    void validate() const;
};

struct TrainReport {
    std::vector<double> per_epoch_loss;  // mean cross-entropy, nats per target token
    std::size_t steps = 0;
};

struct DecodeOptions {
    bool sample = false;      // false: greedy argmax, lowest id wins ties
    std::uint64_t seed = 0;   // used only when sampling
};

/// Generated span plus the full next-token distribution at every decode step.
/// When `terminated`, the last distribution is the one that emitted SPAN_END.
struct SpanPrediction {
    TokenIds span;
    std::vector<std::vector<double>> distributions;
    bool terminated = false;
};

/// Anything that can fill a single MASK. The expander only depends on this.
class SpanInfiller {
public:
    virtual ~SpanInfiller() = default;
    virtual SpanPrediction infill(std::span<const TokenId> corrupted,
                                  std::size_t max_span,
                                  const DecodeOptions& decode = {}) const = 0;
    virtual std::size_t vocab_size() const = 0;
};

/// Pre-norm transformer encoder-decoder trained to regenerate masked spans.
/// Parameters live in one flat buffer; the layout is fixed by (config, vocab size).
class InfillModel final : public SpanInfiller {
public:
    InfillModel(const ModelConfig& config, std::size_t vocab_size);
    ~InfillModel() override;
    InfillModel(InfillModel&&) noexcept;
    InfillModel& operator=(InfillModel&&) noexcept;
    InfillModel(const InfillModel& other);
    InfillModel& operator=(const InfillModel&) = delete;

    const ModelConfig& config() const noexcept;
    std::size_t vocab_size() const override;

    std::span<const double> parameters() const noexcept;
    std::span<double> mutable_parameters() noexcept;
    /// (name, offset, size) for every parameter tensor, in buffer order.
    struct TensorInfo {
        std::string name;
        std::size_t offset;
        std::size_t size;
    };
    std::vector<TensorInfo> tensors() const;

    /// Zeroes the output projection so every predicted distribution is uniform.
    void zero_output_head();

    /// Trains on the same samples every epoch.
    TrainReport train(std::span<const CorruptedSample> samples, const TrainConfig& config);

    /// Trains with a fresh corruption of every query each epoch, drawn from
    /// (config().seed, epoch).
    TrainReport train_cqc(std::span<const TokenIds> queries, const TrainConfig& config);

    using SampleSource = std::function<std::vector<CorruptedSample>(std::size_t epoch)>;
    using EpochCallback = std::function<void(std::size_t epoch, double loss)>;
    TrainReport train(const SampleSource& source, const TrainConfig& config,
                      const EpochCallback& on_epoch = {});

    /// Mean cross-entropy per target token (span tokens plus SPAN_END), no dropout.
    double loss(std::span<const CorruptedSample> samples) const;

    /// Same loss; writes d(loss)/d(parameters) into `gradient` (overwritten).
    double loss_and_gradient(std::span<const CorruptedSample> samples,
                             std::span<double> gradient) const;

    SpanPrediction infill(std::span<const TokenId> corrupted,
                          std::size_t max_span,
                          const DecodeOptions& decode = {}) const override;

    /// Binary checkpoint: magic, JSON header (config, vocab size and hash,
    /// parameter count), then parameters as little-endian float64.
    void save(const std::filesystem::path& path, std::uint64_t vocab_hash) const;
    /// Fails with VocabMismatch when the stored vocabulary hash differs.
    static InfillModel load(const std::filesystem::path& path, std::uint64_t expected_vocab_hash);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace qreform
