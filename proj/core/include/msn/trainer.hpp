#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "msn/metrics.hpp"
#include "msn/network.hpp"
#include "msn/preprocess.hpp"

namespace msn {

struct AdamParams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-6;  // L2 term added to gradients
};

/// Per-parameter Adam moments, shapes mirroring the store exactly.
template <typename T>
struct AdamState {
    AdamParams hp;
    int64_t step_count = 0;
    double beta1_pow = 1.0;  // beta1^step_count
    double beta2_pow = 1.0;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;

    explicit AdamState(AdamParams params = {}) : hp(params) {}

    void init(const ParamStore<T>& store) {
        m.clear();
        v.clear();
        for (const auto& e : store.entries) {
            m.push_back(Tensor<T>::zeros(e.node->value.shape()));
            v.push_back(Tensor<T>::zeros(e.node->value.shape()));
        }
    }
};

/// One Adam update from the gradients currently held by the parameter nodes.
/// g <- g + weight_decay * theta; standard bias-corrected moment update;
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state);

struct TrainConfig {
    int epochs = 100;
    int batch_size = 64;
    uint64_t seed = 0;
    bool track_test = false;  // per-epoch test accuracy in the history
    AdamParams adam;
};

struct EpochStats {
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> test_acc;
};

using TrainHistory = std::vector<EpochStats>;

/// Minibatch Adam training with seeded per-epoch shuffles and deterministic
/// dropout streams. History holds one entry per epoch.
TrainHistory train(MixedSn<float>& net, const PatchSet& patches, const SplitPlan& split,
                   const TrainConfig& cfg);

/// Eval-mode argmax predictions (ties break to the lowest class id) for the
/// given patch indices.
std::vector<int> predict(MixedSn<float>& net, const PatchSet& patches,
                         const std::vector<int64_t>& indices, int batch_size = 64);

struct EvalResult {
    std::vector<int> predictions;  // parallel to `indices`
    ConfusionMatrix confusion;
};

EvalResult evaluate(MixedSn<float>& net, const PatchSet& patches,
                    const std::vector<int64_t>& indices, int batch_size = 64);

/// epoch,train_loss,train_acc[,test_acc], 6-decimal fixed.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

/// One-hot rows for a batch of 1..L labels.
Tensor<float> one_hot(const std::vector<int>& labels, int num_classes);

}  // namespace msn
