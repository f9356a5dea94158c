#pragma once

#include <map>
#include <string>
#include <vector>

#include "hyda/tensor.hpp"

namespace hyda {

enum class ModalityKind { imaging, tabular };

struct ModalityDesc {
    std::string name;
    ModalityKind kind = ModalityKind::imaging;
    int64_t emb_dim = 0;   // embedding length fed to the hypergraph
    Shape map_shape;       // imaging: [1,C,D,H,W]; tabular: empty
    int64_t raw_dim = 0;   // tabular: raw feature width; imaging: 0
};

struct SubjectRecord {
    std::string subject_id;
    std::map<std::string, TensorPtr> embeddings;    // imaging modality -> [E]
    std::map<std::string, TensorPtr> feature_maps;  // imaging modality -> [1,C,D,H,W]
    TensorPtr tabular;                              // [raw_dim] or null
    int64_t label = 0;
};

struct CohortDataset {
    std::vector<ModalityDesc> modalities;  // ordered descriptors
    std::vector<SubjectRecord> subjects;
    int64_t num_classes = 0;

    int64_t subject_count() const { return static_cast<int64_t>(subjects.size()); }
    int64_t modality_count() const { return static_cast<int64_t>(modalities.size()); }
    const ModalityDesc* find_modality(const std::string& name) const;
    std::vector<int64_t> labels() const;

    void validate() const;
    uint64_t shape_fingerprint() const;  // descriptors + N + K
};

struct SynthSpec {
    int64_t subjects = 0;
    int64_t imaging_modalities = 1;
    bool tabular = true;
    int64_t emb_dim = 128;                      // imaging embedding length
    int64_t map_channels = 16, map_d = 4, map_h = 4, map_w = 4;
    int64_t classes = 2;
    double imbalance_ratio = 1.0;               // majority/minority size ratio
    double complementarity = 0.0;               // 0: redundant .. 1: disjoint views
    double noise_sigma = 0.0;
    int64_t tabular_dim = 6;                    // raw tabular width
    int64_t tabular_emb_dim = 16;               // MLP output width
};

/// Deterministic multi-modal cohort: latent class vector per subject,
/// per-modality projections whose disjointness grows with complementarity,
/// Gaussian-blob feature maps, monotone noisy tabular features.
CohortDataset synth_cohort(const SynthSpec& spec, uint64_t seed);

/// Per-feature min/max, fitted on the training subjects only.
struct FeatureScaler {
    // modality name -> (min, max) per coordinate; key "__tabular__" holds the
    // raw tabular ranges.
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> ranges;
};

FeatureScaler fit_scaler(const CohortDataset& ds, const std::vector<int64_t>& train_ids);
CohortDataset apply_scaler(const CohortDataset& ds, const FeatureScaler& scaler);

/// Min-max scaling to [0,1]: statistics from the training portion, applied
/// to every subject (clamped); constant features map to 0.
CohortDataset normalize(const CohortDataset& ds, const std::vector<int64_t>& train_ids,
                        FeatureScaler* out_scaler = nullptr);

struct FoldSplit {
    int64_t fold_index = 0;
    std::vector<int64_t> train_ids;
    std::vector<int64_t> val_ids;
};

/// Stratified, seeded, disjoint validation folds covering every subject
/// exactly once; per-class validation share within one subject of the
/// global share.
std::vector<FoldSplit> kfold_split(const std::vector<int64_t>& labels, int64_t folds,
                                   uint64_t seed);

// Cohort container: directory with manifest.json plus one raw f32le tensor
// file per subject per modality role.
void save_cohort(const CohortDataset& ds, const std::string& dir);
CohortDataset load_cohort(const std::string& dir);

}  // namespace hyda
