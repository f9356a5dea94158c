#include "hyda/fusion.hpp"

namespace hyda {

int64_t kernel_generator_weight_count(int64_t C, int64_t C_hid, int64_t C_out) {
    return (C / 27) * C_hid + C_out;
}

TensorPtr generate_kernels(const TensorPtr& f_tap, const KernelGeneratorParams& gen) {
    if (f_tap->shape.size() != 5 || f_tap->shape[0] != 1) {
        throw ShapeError("generate_kernels: expected tap [1,C,1,1,1], got " +
                         shape_str(f_tap->shape));
    }
    const int64_t c = f_tap->shape[1];
    if (c % 27 != 0) {
        throw ConfigError("generate_kernels: C=" + std::to_string(c) + " not divisible by 27");
    }
    auto t = ops::reshape(f_tap, {1, c / 27, 3, 3, 3});
    t = ops::pointwise_conv3d(t, gen.conv1_w, gen.conv1_b);  // [1, C_hid, 3,3,3]
    t = ops::swap_axes01(t);                                 // [C_hid, 1, 3,3,3]
    t = ops::pointwise_conv3d(t, gen.conv2_w, gen.conv2_b);  // [C_hid, C_out, 3,3,3]
    return ops::swap_axes01(t);                              // [C_out, C_hid, 3,3,3]
}

TensorPtr dynamic_fuse(const TensorPtr& kernels, const TensorPtr& feature_map) {
    return ops::relu(ops::conv3d_same(feature_map, kernels));
}

TensorPtr merge_enhance(const TensorPtr& o1, const TensorPtr& o2, const FusionParams& fp) {
    if (o1->shape != o2->shape) {
        throw ShapeError("merge_enhance: shape mismatch " + shape_str(o1->shape) + " vs " +
                         shape_str(o2->shape));
    }
    auto merged = ops::pointwise_conv3d(ops::concat_channels(o1, o2), fp.conv3_w, fp.conv3_b);
    auto gate = ops::sigmoid(
        ops::pointwise_conv3d(ops::global_avg_pool(merged), fp.conv4_w, fp.conv4_b));
    auto body = ops::relu(ops::pointwise_conv3d(merged, fp.conv5_w, fp.conv5_b));
    return ops::mul_channel_gate(body, gate);
}

TensorPtr residual_enhance(const TensorPtr& x, const TensorPtr& o_hat) {
    auto flat = ops::flatten(o_hat);
    if (x->shape != flat->shape) {
        throw ShapeError("residual_enhance: embedding " + shape_str(x->shape) +
                         " vs flattened map " + shape_str(flat->shape));
    }
    return ops::add(x, flat);
}

std::vector<std::vector<TensorPtr>> fuse_all(
    const TensorPtr& f1, const TensorPtr& f2,
    const std::vector<std::vector<TensorPtr>>& maps,
    const std::vector<std::vector<TensorPtr>>& x_rows,
    const KernelGeneratorParams& gen1, const KernelGeneratorParams& gen2,
    const FusionParams& fp) {
    const int64_t b = f1->shape[0];
    const int64_t c = f1->shape[1];
    std::vector<std::vector<TensorPtr>> out(maps.size());
    for (auto& v : out) v.resize(static_cast<size_t>(b));
    for (int64_t n = 0; n < b; ++n) {
        auto tap1 = ops::reshape(ops::select_row(f1, n), {1, c, 1, 1, 1});
        auto tap2 = ops::reshape(ops::select_row(f2, n), {1, c, 1, 1, 1});
        auto k1 = generate_kernels(tap1, gen1);
        auto k2 = generate_kernels(tap2, gen2);
        for (size_t m = 0; m < maps.size(); ++m) {
            const auto& fmap = maps[m][static_cast<size_t>(n)];
            auto o1 = dynamic_fuse(k1, fmap);
            auto o2 = dynamic_fuse(k2, fmap);
            auto enhanced = merge_enhance(o1, o2, fp);
            out[m][static_cast<size_t>(n)] =
                residual_enhance(x_rows[m][static_cast<size_t>(n)], enhanced);
        }
    }
    return out;
}

}  // namespace hyda
