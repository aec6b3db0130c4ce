#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sider/rng.hpp"
#include "sider/tensor.hpp"

namespace sider {

enum class Split { Train, Val, Test };

const char* split_name(Split s);

struct ImageSample {
    Tensor pixels;  // {3,H,W}, values in [0,1]
    int identity_id = 0;
    std::string source;  // file path or "synthetic"
    Split split = Split::Train;

    void validate() const;  // pixel range + square shape
};

struct DatasetManifest {
    std::vector<ImageSample> samples;
    int identity_count = 0;
    int resolution = 0;
    uint64_t generator_seed = 0;
    // synthetic data keeps its generating attributes around for
    // attribute-based conditioning; empty for loaded datasets
    std::map<int, std::vector<real>> identity_attributes;

    std::vector<const ImageSample*> in_split(Split s) const;
    std::vector<int> identities_in_split(Split s) const;
    DatasetManifest subset(Split s) const;  // samples of one split only
    std::string data_hash() const;     // hex digest over ids/splits/pixels
    std::string to_json() const;       // references only, not pixel data
    void check_invariants() const;     // split disjointness, identity_count >= 2
};

// Procedural face: geometry and colors are driven by identity_vector,
// per-image variation only through pose_jitter. Pure function of its fields.
struct SyntheticFaceSpec {
    std::vector<real> identity_vector;  // 12 components in [0,1]
    real pose_jitter = 0.0;
    uint64_t seed = 0;

    Tensor render(int resolution) const;
};

std::vector<real> make_identity_vector(Rng& rng);

// Deterministic synthetic dataset with identity-disjoint splits.
DatasetManifest synth_faces(int n_identities, int per_identity, uint64_t seed, int resolution = 64);

// Loads <dir>/<identity>/<image>.png, center-crop + resize, identity-disjoint
// splits seeded by `seed`. Unreadable files are skipped (count reported via
// warning_count when non-null).
DatasetManifest load_dataset(const std::string& dir, int resolution, uint64_t seed = 0,
                             int* warning_count = nullptr);

}  // namespace sider
