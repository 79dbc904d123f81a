#include "msn/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace msn {

template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state) {
    if (state.m.size() != params.entries.size())
        throw ShapeError("adam_step: state not initialized for this parameter store");

    state.step_count++;
    state.beta1_pow *= state.hp.beta1;
    state.beta2_pow *= state.hp.beta2;
    const double bc1 = 1.0 - state.beta1_pow;
    const double bc2 = 1.0 - state.beta2_pow;

    for (size_t p = 0; p < params.entries.size(); ++p) {
        auto& node = *params.entries[p].node;
        Tensor<T>& m = state.m[p];
        Tensor<T>& v = state.v[p];
        if (!m.same_shape(node.value))
            throw ShapeError("adam_step: moment shape mismatch for " + params.entries[p].name);
        const bool has_grad = node.grad_ready;
        for (int64_t i = 0; i < node.value.numel(); ++i) {
            const double theta = static_cast<double>(node.value[i]);
            double g = has_grad ? static_cast<double>(node.grad[i]) : 0.0;
            if (!std::isfinite(g))
                throw NumericError("adam_step: non-finite gradient in " + params.entries[p].name);
            g += state.hp.weight_decay * theta;
            const double mi = state.hp.beta1 * static_cast<double>(m[i]) +
                              (1.0 - state.hp.beta1) * g;
            const double vi = state.hp.beta2 * static_cast<double>(v[i]) +
                              (1.0 - state.hp.beta2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            node.value[i] = static_cast<T>(theta - state.hp.lr * m_hat /
                                                       (std::sqrt(v_hat) + state.hp.eps));
        }
    }
}

template void adam_step<float>(ParamStore<float>&, AdamState<float>&);
template void adam_step<double>(ParamStore<double>&, AdamState<double>&);

Tensor<float> one_hot(const std::vector<int>& labels, int num_classes) {
    Tensor<float> out({static_cast<int64_t>(labels.size()), num_classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        const int c = labels[i];
        if (c < 1 || c > num_classes)
            throw ValueError("one_hot: label " + std::to_string(c) + " out of range 1.." +
                             std::to_string(num_classes));
        out[static_cast<int64_t>(i) * num_classes + (c - 1)] = 1.0f;
    }
    return out;
}

namespace {

Tensor<float> gather_batch(const PatchSet& patches, const std::vector<int64_t>& indices,
                           size_t begin, size_t end) {
    const int64_t T = patches.bands, S = patches.window;
    const int64_t per_patch = T * S * S;
    Tensor<float> batch({static_cast<int64_t>(end - begin), 1, T, S, S});
    float* dst = batch.data();
    for (size_t k = begin; k < end; ++k) {
        const float* src = patches.patches.data() + indices[k] * per_patch;
        std::copy(src, src + per_patch, dst);
        dst += per_patch;
    }
    return batch;
}

int argmax_row(const float* row, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;
    return best;  // lowest index wins ties
}

}  // namespace

TrainHistory train(MixedSn<float>& net, const PatchSet& patches, const SplitPlan& split,
                   const TrainConfig& cfg) {
    if (split.train_indices.empty()) throw ValueError("train: empty training split");
    if (cfg.epochs < 1 || cfg.batch_size < 1)
        throw ValueError("train: epochs and batch size must be >= 1");
    const int L = net.config().classes;

    AdamState<float> state(cfg.adam);
    state.init(net.params());

    Rng shuffle_base = Rng(cfg.seed).split(rng_stream::kShuffle);
    Rng dropout_base = Rng(cfg.seed).split(rng_stream::kDropout);

    TrainHistory history;
    history.reserve(static_cast<size_t>(cfg.epochs));

    std::vector<int64_t> order = split.train_indices;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Epoch permutation is a pure function of (seed, epoch).
        order = split.train_indices;
        Rng shuffle_rng = shuffle_base.split(static_cast<uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

        double loss_sum = 0.0;
        int64_t batches = 0, correct = 0;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
            Tensor<float> batch = gather_batch(patches, order, begin, end);
            std::vector<int> batch_labels;
            batch_labels.reserve(end - begin);
            for (size_t k = begin; k < end; ++k)
                batch_labels.push_back(patches.labels[static_cast<size_t>(order[k])]);
            Tensor<float> truth = one_hot(batch_labels, L);

            Rng dropout_rng =
                dropout_base.split(static_cast<uint64_t>(epoch)).split(batches);
            net.params().zero_grads();
            NodePtr<float> logits = net.forward(batch, RunMode::train, &dropout_rng);
            auto [loss, probs] = softmax_xent(logits, truth);
            if (!std::isfinite(static_cast<double>(loss->value[0])))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                   ", batch " + std::to_string(batches + 1));
            backward(loss);
            adam_step(net.params(), state);

            loss_sum += static_cast<double>(loss->value[0]);
            ++batches;
            for (size_t k = 0; k < end - begin; ++k)
                if (argmax_row(probs.data() + static_cast<int64_t>(k) * L, L) + 1 ==
                    batch_labels[k])
                    ++correct;
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(batches);
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
        if (cfg.track_test && !split.test_indices.empty()) {
            EvalResult r = evaluate(net, patches, split.test_indices, cfg.batch_size);
            stats.test_acc = overall_accuracy(r.confusion);
        }
        history.push_back(stats);
    }
    return history;
}

std::vector<int> predict(MixedSn<float>& net, const PatchSet& patches,
                         const std::vector<int64_t>& indices, int batch_size) {
    const int L = net.config().classes;
    std::vector<int> preds;
    preds.reserve(indices.size());
    for (size_t begin = 0; begin < indices.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(indices.size(), begin + static_cast<size_t>(batch_size));
        Tensor<float> batch = gather_batch(patches, indices, begin, end);
        Tensor<float> logits = net.forward(batch, RunMode::eval)->value;
        for (size_t k = 0; k < end - begin; ++k)
            preds.push_back(argmax_row(logits.data() + static_cast<int64_t>(k) * L, L) + 1);
    }
    return preds;
}

EvalResult evaluate(MixedSn<float>& net, const PatchSet& patches,
                    const std::vector<int64_t>& indices, int batch_size) {
    std::vector<int> preds = predict(net, patches, indices, batch_size);
    std::vector<int> truth;
    truth.reserve(indices.size());
    for (int64_t idx : indices) truth.push_back(patches.labels[static_cast<size_t>(idx)]);
    ConfusionMatrix cm =
        ConfusionMatrix::from_labels(truth, preds, net.config().classes);
    return {std::move(preds), std::move(cm)};
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write history file " + path.string());
    const bool with_test = !history.empty() && history.front().test_acc.has_value();
    out << "epoch,train_loss,train_acc";
    if (with_test) out << ",test_acc";
    out << "\n";
    out << std::fixed << std::setprecision(6);
    for (size_t i = 0; i < history.size(); ++i) {
        out << (i + 1) << "," << history[i].train_loss << "," << history[i].train_acc;
        if (with_test) out << "," << history[i].test_acc.value_or(0.0);
        out << "\n";
    }
}

}  // namespace msn
