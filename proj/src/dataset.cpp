#include "sider/dataset.hpp"

#include <sodium.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "sider/image_io.hpp"

namespace fs = std::filesystem;

namespace sider {

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

void ImageSample::validate() const {
    if (pixels.ndim() != 3 || pixels.dim(0) != 3 || pixels.dim(1) != pixels.dim(2))
        throw std::invalid_argument("ImageSample: pixels must be {3,R,R}");
    for (real v : pixels.data)
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("ImageSample: pixel outside [0,1]");
}

std::vector<const ImageSample*> DatasetManifest::in_split(Split s) const {
    std::vector<const ImageSample*> out;
    for (auto& smp : samples)
        if (smp.split == s) out.push_back(&smp);
    return out;
}

std::vector<int> DatasetManifest::identities_in_split(Split s) const {
    std::set<int> ids;
    for (auto& smp : samples)
        if (smp.split == s) ids.insert(smp.identity_id);
    return {ids.begin(), ids.end()};
}

DatasetManifest DatasetManifest::subset(Split s) const {
    DatasetManifest out;
    out.resolution = resolution;
    out.generator_seed = generator_seed;
    std::set<int> ids;
    for (auto& smp : samples)
        if (smp.split == s) {
            out.samples.push_back(smp);
            ids.insert(smp.identity_id);
        }
    out.identity_count = (int)ids.size();
    for (int id : ids) {
        auto it = identity_attributes.find(id);
        if (it != identity_attributes.end()) out.identity_attributes[id] = it->second;
    }
    return out;
}

void DatasetManifest::check_invariants() const {
    if (identity_count < 2) throw std::invalid_argument("manifest: identity_count must be >= 2");
    std::map<int, Split> seen;
    for (auto& smp : samples) {
        auto it = seen.find(smp.identity_id);
        if (it == seen.end())
            seen[smp.identity_id] = smp.split;
        else if (it->second != smp.split)
            throw std::logic_error("manifest: identity appears in more than one split");
    }
}

std::string DatasetManifest::data_hash() const {
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, 16);
    for (auto& smp : samples) {
        int32_t id = smp.identity_id;
        int32_t sp = (int32_t)smp.split;
        crypto_generichash_update(&st, (const unsigned char*)&id, sizeof id);
        crypto_generichash_update(&st, (const unsigned char*)&sp, sizeof sp);
        for (real v : smp.pixels.data) {
            unsigned char q = (unsigned char)std::lround(v * 255.0);
            crypto_generichash_update(&st, &q, 1);
        }
    }
    unsigned char out[16];
    crypto_generichash_final(&st, out, 16);
    char hex[33];
    sodium_bin2hex(hex, sizeof hex, out, 16);
    return hex;
}

std::string DatasetManifest::to_json() const {
    nlohmann::json j;
    j["identity_count"] = identity_count;
    j["resolution"] = resolution;
    j["generator_seed"] = generator_seed;
    j["data_hash"] = data_hash();
    auto& arr = j["samples"] = nlohmann::json::array();
    for (auto& smp : samples)
        arr.push_back({{"identity_id", smp.identity_id}, {"source", smp.source}, {"split", split_name(smp.split)}});
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// synthetic faces

namespace {

// 0..1 coverage ramp, ~1px wide, for antialiased shape edges
real edge(real signed_dist, real soft) {
    real t = 0.5 - signed_dist / (2.0 * soft);
    return std::min(1.0, std::max(0.0, t));
}

struct FaceGeom {
    real cx, cy, rx, ry;          // head ellipse
    real skin[3], hair[3];        // colors
    real eye_dx, eye_y, eye_r;    // eyes
    real mouth_y, mouth_w, mouth_curve;
    real hair_frac;               // hairline height as fraction of ry
    real brightness;
};

FaceGeom derive_geometry(const SyntheticFaceSpec& spec) {
    const auto& v = spec.identity_vector;
    if (v.size() < 12) throw std::invalid_argument("SyntheticFaceSpec: identity_vector needs 12 components");

    // pose expansion: a single jitter scalar fans out through a hash so each
    // spec renders one fixed pose
    Rng jrng(spec.seed * 0x9e3779b97f4a7c15ULL ^ (uint64_t)(int64_t)std::llround(spec.pose_jitter * 1e9));
    real amp = 0.6 * std::min(1.0, std::fabs(spec.pose_jitter));
    real dx = amp * 0.04 * (2.0 * jrng.uniform() - 1.0);
    real dy = amp * 0.04 * (2.0 * jrng.uniform() - 1.0);
    real ds = 1.0 + amp * 0.06 * (2.0 * jrng.uniform() - 1.0);
    real db = amp * 0.08 * (2.0 * jrng.uniform() - 1.0);

    FaceGeom g;
    g.cx = 0.5 + dx;
    g.cy = 0.52 + dy;
    g.rx = (0.24 + 0.10 * v[3]) * ds;
    g.ry = (0.32 + 0.10 * v[4]) * ds;
    g.skin[0] = 0.55 + 0.35 * v[0];
    g.skin[1] = 0.40 + 0.35 * v[1];
    g.skin[2] = 0.30 + 0.30 * v[2];
    g.hair[0] = 0.08 + 0.55 * v[5];
    g.hair[1] = 0.05 + 0.40 * v[6];
    g.hair[2] = 0.03 + 0.35 * v[7];
    g.eye_dx = (0.35 + 0.30 * v[8]) * g.rx;
    g.eye_y = g.cy - 0.22 * g.ry;
    g.eye_r = 0.035 + 0.025 * v[9];
    g.mouth_y = g.cy + 0.52 * g.ry;
    g.mouth_w = (0.28 + 0.30 * v[10]) * g.rx;
    g.mouth_curve = 0.04 * (v[11] - 0.5);
    g.hair_frac = 0.45 + 0.25 * v[9];
    g.brightness = 1.0 + db;
    return g;
}

}  // namespace

Tensor SyntheticFaceSpec::render(int resolution) const {
    FaceGeom g = derive_geometry(*this);
    int R = resolution;
    Tensor img({3, R, R});
    const real soft = 1.2 / R;
    const real bg[3] = {0.86, 0.88, 0.90};
    const real pupil[3] = {0.07, 0.06, 0.08};
    const real mouth_col[3] = {0.55, 0.16, 0.18};

    for (int y = 0; y < R; ++y) {
        real py = (y + 0.5) / R;
        for (int x = 0; x < R; ++x) {
            real px = (x + 0.5) / R;
            real col[3] = {bg[0], bg[1], bg[2]};

            // head: implicit ellipse distance approximation
            real ex = (px - g.cx) / g.rx, ey = (py - g.cy) / g.ry;
            real d_head = (std::sqrt(ex * ex + ey * ey) - 1.0) * std::min(g.rx, g.ry);
            real a_head = edge(d_head, soft);
            for (int c = 0; c < 3; ++c) col[c] = col[c] + a_head * (g.skin[c] - col[c]);

            // hair band: upper part of an enlarged ellipse
            real hx = (px - g.cx) / (g.rx * 1.12), hy = (py - (g.cy - 0.05)) / (g.ry * 1.12);
            real d_hair = (std::sqrt(hx * hx + hy * hy) - 1.0) * std::min(g.rx, g.ry);
            real hairline = g.cy - g.hair_frac * g.ry;
            real a_band = edge(d_hair, soft) * edge(py - hairline, soft);
            for (int c = 0; c < 3; ++c) col[c] = col[c] + a_band * (g.hair[c] - col[c]);

            // eyes: sclera then pupil
            for (int side = -1; side <= 1; side += 2) {
                real ecx = g.cx + side * g.eye_dx;
                real dxs = px - ecx, dys = py - g.eye_y;
                real d_eye = std::sqrt(dxs * dxs + dys * dys * 1.9) - g.eye_r;
                real a_eye = edge(d_eye, soft);
                for (int c = 0; c < 3; ++c) col[c] = col[c] + a_eye * (0.95 - col[c]);
                real d_pup = std::sqrt(dxs * dxs + dys * dys) - g.eye_r * 0.45;
                real a_pup = edge(d_pup, soft);
                for (int c = 0; c < 3; ++c) col[c] = col[c] + a_pup * (pupil[c] - col[c]);
            }

            // mouth: curved horizontal band
            real mx = (px - g.cx) / g.mouth_w;
            if (mx > -1.5 && mx < 1.5) {
                real curve_y = g.mouth_y + g.mouth_curve * (mx * mx - 0.5);
                real d_m = std::fabs(py - curve_y) - 0.016;
                real a_m = edge(d_m, soft) * edge(std::fabs(mx) - 1.0, 0.1);
                for (int c = 0; c < 3; ++c) col[c] = col[c] + a_m * (mouth_col[c] - col[c]);
            }

            for (int c = 0; c < 3; ++c)
                img.at3(c, y, x) = std::min(1.0, std::max(0.0, col[c] * g.brightness));
        }
    }
    return img;
}

std::vector<real> make_identity_vector(Rng& rng) {
    std::vector<real> v(12);
    for (auto& c : v) c = rng.uniform();
    return v;
}

namespace {

void assign_splits(std::vector<int>& identity_order, Rng& rng, std::map<int, Split>& out) {
    rng.shuffle(identity_order);
    int n = (int)identity_order.size();
    int n_test, n_val;
    if (n == 2) {
        n_test = 0;
        n_val = 1;
    } else {
        n_test = std::max(1, n / 4);
        n_val = std::max(1, (3 * n) / 20);
    }
    for (int i = 0; i < n; ++i) {
        Split s = Split::Train;
        if (i < n_test)
            s = Split::Test;
        else if (i < n_test + n_val)
            s = Split::Val;
        out[identity_order[(size_t)i]] = s;
    }
}

}  // namespace

DatasetManifest synth_faces(int n_identities, int per_identity, uint64_t seed, int resolution) {
    if (n_identities < 2) throw std::invalid_argument("synth_faces: need >= 2 identities");
    if (per_identity < 1) throw std::invalid_argument("synth_faces: per_identity must be >= 1");

    Rng rng(seed);
    std::vector<std::vector<real>> id_vecs;
    id_vecs.reserve((size_t)n_identities);
    for (int i = 0; i < n_identities; ++i) id_vecs.push_back(make_identity_vector(rng));

    std::vector<int> order(n_identities);
    for (int i = 0; i < n_identities; ++i) order[(size_t)i] = i;
    std::map<int, Split> split_of;
    assign_splits(order, rng, split_of);

    DatasetManifest m;
    m.identity_count = n_identities;
    m.resolution = resolution;
    m.generator_seed = seed;
    for (int i = 0; i < n_identities; ++i) m.identity_attributes[i] = id_vecs[(size_t)i];
    for (int i = 0; i < n_identities; ++i) {
        for (int j = 0; j < per_identity; ++j) {
            SyntheticFaceSpec spec;
            spec.identity_vector = id_vecs[(size_t)i];
            spec.pose_jitter = (j == 0) ? 0.0 : (real)j / (real)per_identity;
            spec.seed = seed ^ ((uint64_t)i << 20) ^ (uint64_t)j;
            ImageSample smp;
            smp.pixels = spec.render(resolution);
            smp.identity_id = i;
            smp.source = "synthetic";
            smp.split = split_of[i];
            smp.validate();
            m.samples.push_back(std::move(smp));
        }
    }
    m.check_invariants();
    return m;
}

DatasetManifest load_dataset(const std::string& dir, int resolution, uint64_t seed, int* warning_count) {
    if (!fs::is_directory(dir)) throw std::runtime_error("load_dataset: no data (not a directory): " + dir);

    std::vector<std::string> subdirs;
    for (auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) subdirs.push_back(e.path().filename().string());
    std::sort(subdirs.begin(), subdirs.end());
    if (subdirs.empty()) throw std::runtime_error("load_dataset: no data");
    if (subdirs.size() < 2)
        throw std::runtime_error("load_dataset: need >=2 identities for verification pairs");

    int warnings = 0;
    DatasetManifest m;
    m.identity_count = (int)subdirs.size();
    m.resolution = resolution;
    m.generator_seed = seed;

    std::vector<int> order((size_t)m.identity_count);
    for (int i = 0; i < m.identity_count; ++i) order[(size_t)i] = i;
    Rng rng(seed);
    std::map<int, Split> split_of;
    assign_splits(order, rng, split_of);

    for (int id = 0; id < (int)subdirs.size(); ++id) {
        std::vector<std::string> files;
        for (auto& e : fs::directory_iterator(fs::path(dir) / subdirs[(size_t)id]))
            if (e.is_regular_file()) files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        for (auto& f : files) {
            try {
                ImageSample smp;
                smp.pixels = crop_resize(read_png(f), resolution);
                smp.identity_id = id;
                smp.source = f;
                smp.split = split_of[id];
                smp.validate();
                m.samples.push_back(std::move(smp));
            } catch (const std::exception& ex) {
                std::cerr << "load_dataset: skipping " << f << ": " << ex.what() << "\n";
                ++warnings;
            }
        }
    }
    if (warning_count) *warning_count = warnings;
    if (m.samples.empty()) throw std::runtime_error("load_dataset: no data");
    m.check_invariants();
    return m;
}

}  // namespace sider
