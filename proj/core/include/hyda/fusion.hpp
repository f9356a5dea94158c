#pragma once

#include <vector>

#include "hyda/ops.hpp"

namespace hyda {

/// Kernel generator: two pointwise convolutions around an axis swap. One
/// instance per hypergraph layer tap.
struct KernelGeneratorParams {
    TensorPtr conv1_w;  // [C_hid, C/27]
    TensorPtr conv1_b;  // [C_hid]
    TensorPtr conv2_w;  // [C_out, 1]
    TensorPtr conv2_b;  // [C_out]
};

struct FusionParams {
    TensorPtr conv3_w;  // [C_hid, 2*C_out]
    TensorPtr conv3_b;
    TensorPtr conv4_w;  // [C_res, C_hid]
    TensorPtr conv4_b;
    TensorPtr conv5_w;  // [C_res, C_hid]
    TensorPtr conv5_b;
};

/// Stored weight count of one generator, excluding biases:
/// (C/27)*C_hid + C_out.
int64_t kernel_generator_weight_count(int64_t C, int64_t C_hid, int64_t C_out);

/// f_tap [1,C,1,1,1] -> subject-conditioned kernels [C_out, C_hid, 3,3,3].
TensorPtr generate_kernels(const TensorPtr& f_tap, const KernelGeneratorParams& gen);

/// ReLU(conv3d_same(feature_map, kernels)).
TensorPtr dynamic_fuse(const TensorPtr& kernels, const TensorPtr& feature_map);

/// Merge both tap outputs, then channel reduce/scale:
/// O = conv3(concat(O1,O2)); out = sigmoid(conv4(pool(O))) .* relu(conv5(O)).
TensorPtr merge_enhance(const TensorPtr& o1, const TensorPtr& o2, const FusionParams& fp);

/// x [1,E] + flatten(o_hat).
TensorPtr residual_enhance(const TensorPtr& x, const TensorPtr& o_hat);

/// Whole fusion path for a batch: taps f1,f2 are [B,C]; maps[m][n] the
/// imaging feature maps, x_rows[m][n] the matching [1,E] embeddings.
/// Returns enhanced [1,E] rows per imaging modality per subject.
std::vector<std::vector<TensorPtr>> fuse_all(
    const TensorPtr& f1, const TensorPtr& f2,
    const std::vector<std::vector<TensorPtr>>& maps,
    const std::vector<std::vector<TensorPtr>>& x_rows,
    const KernelGeneratorParams& gen1, const KernelGeneratorParams& gen2,
    const FusionParams& fp);

}  // namespace hyda
