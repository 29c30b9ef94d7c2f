#pragma once

/// @file data_model.hpp
/// Synthetic scenes, dataset splits, initial-label sampling, proposal
/// generation and JSON persistence.
///
/// Images are not pixels: each one is a coarse grid of feature vectors
/// (`FeatureGrid`). Objects are rendered into the cells they cover as a
/// per-class signature plus per-instance and per-cell noise. Distractor
/// images contain only out-of-vocabulary blobs and carry no annotations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mspld/error.hpp"
#include "mspld/geometry.hpp"
#include "mspld/rng.hpp"

namespace mspld {

using json = nlohmann::json;

struct Annotation {
    BBox box;
    int class_id = 0;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Row-major rows x cols x dim feature tensor; cell (r, c) covers pixels
/// [r*cell_size, (r+1)*cell_size) x [c*cell_size, (c+1)*cell_size).
struct FeatureGrid {
    int rows = 0;
    int cols = 0;
    int dim = 0;
    double cell_size = 1.0;
    std::vector<double> values;  // quantized to 1e-3 so JSON text stays short and exact

    double at(int r, int c, int d) const { return values[(static_cast<std::size_t>(r) * cols + c) * dim + d]; }
    double& at(int r, int c, int d) { return values[(static_cast<std::size_t>(r) * cols + c) * dim + d]; }

    friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;
};

struct ImageRecord {
    int image_id = 0;
    double width = 0.0;
    double height = 0.0;
    std::vector<Annotation> objects;
    /// Class-agnostic salient rectangles (objects, clutter, distractor blobs).
    /// This is what an unsupervised proposal method would latch onto.
    std::vector<BBox> salient_regions;
    FeatureGrid feature_grid;
    bool is_distractor = false;

    bool contains_class(int c) const {
        return std::any_of(objects.begin(), objects.end(), [c](const Annotation& a) { return a.class_id == c; });
    }

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DatasetSplit {
    int num_classes = 0;
    std::vector<ImageRecord> images;  // sorted by image_id
    std::vector<int> labeled_ids;     // each id list sorted ascending
    std::vector<int> unlabeled_ids;
    std::vector<int> test_ids;

    const ImageRecord& image(int id) const {
        auto it = std::lower_bound(images.begin(), images.end(), id,
                                   [](const ImageRecord& r, int v) { return r.image_id < v; });
        if (it == images.end() || it->image_id != id)
            throw InvalidArgument("unknown image id " + std::to_string(id));
        return *it;
    }

    /// Throws InvalidArgument when any structural invariant is broken.
    void validate() const;

    friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct ProposalSet {
    int image_id = 0;
    std::vector<BBox> proposals;

    friend bool operator==(const ProposalSet&, const ProposalSet&) = default;
};

/// Parameters of the synthetic scene generator. Sizes are in pixels.
struct SceneSpec {
    int num_images = 300;  // training pool, distractors included
    int num_test_images = 200;
    int num_classes = 4;
    double image_height = 160.0;
    double image_width = 160.0;
    double cell_size = 10.0;
    int feature_dim = 12;
    int max_objects = 3;
    double object_min_size = 30.0;
    double object_max_size = 70.0;
    double max_overlap = 0.3;  // max IoU between two objects of one image
    double signature_scale = 1.5;
    double feature_noise = 1.0;   // per-cell sigma
    double instance_noise = 2.0;  // per-object signature perturbation sigma
    int max_clutter = 1;          // background blobs per image, uniform in [0, max_clutter]
    double distractor_fraction = 0.0;
    std::uint64_t signature_seed = 2018;
    /// Optional explicit C x D signatures; derived from signature_seed when empty.
    std::vector<std::vector<double>> class_signatures;
};

struct ProposalConfig {
    int proposals_per_image = 100;
    double jitter = 0.12;  // relative to region side length
    double random_fraction = 0.3;
    double min_size = 20.0;
    double max_size = 90.0;
};

namespace detail {

inline double quantize(double v) { return std::round(v * 1000.0) / 1000.0; }

inline std::vector<std::vector<double>> make_signatures(const SceneSpec& spec, int count, std::uint64_t stream) {
    // Random signs: every channel carries signal for every class, so any
    // subset of channels still separates the classes on average.
    auto rng = make_rng(spec.signature_seed, stream);
    std::bernoulli_distribution coin(0.5);
    std::vector<std::vector<double>> sig(count, std::vector<double>(spec.feature_dim));
    for (auto& s : sig)
        for (auto& v : s) v = coin(rng) ? spec.signature_scale : -spec.signature_scale;
    return sig;
}

inline void paint(FeatureGrid& g, const BBox& box, const std::vector<double>& base, double sigma, Rng& rng) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (int r = 0; r < g.rows; ++r) {
        const double cy = (r + 0.5) * g.cell_size;
        if (cy < box.up || cy >= box.bottom) continue;
        for (int c = 0; c < g.cols; ++c) {
            const double cx = (c + 0.5) * g.cell_size;
            if (cx < box.left || cx >= box.right) continue;
            for (int d = 0; d < g.dim; ++d) g.at(r, c, d) = quantize(base[d] + noise(rng));
        }
    }
}

inline BBox random_box(Rng& rng, double lo, double hi, double height, double width) {
    std::uniform_real_distribution<double> side(lo, hi);
    const double h = std::min(side(rng), height);
    const double w = std::min(side(rng), width);
    std::uniform_real_distribution<double> py(0.0, height - h);
    std::uniform_real_distribution<double> px(0.0, width - w);
    const double up = py(rng);
    const double left = px(rng);
    return BBox{up, left, up + h, left + w};
}

inline std::vector<double> perturbed(const std::vector<double>& base, double sigma, Rng& rng) {
    std::normal_distribution<double> noise(0.0, sigma);
    auto out = base;
    for (auto& v : out) v += noise(rng);
    return out;
}

inline ImageRecord render_image(const SceneSpec& spec, const std::vector<std::vector<double>>& signatures,
                                const std::vector<double>& ood_signature, int image_id, bool distractor,
                                Rng& rng) {
    ImageRecord img;
    img.image_id = image_id;
    img.height = spec.image_height;
    img.width = spec.image_width;
    img.is_distractor = distractor;

    auto& g = img.feature_grid;
    g.rows = static_cast<int>(std::floor(spec.image_height / spec.cell_size));
    g.cols = static_cast<int>(std::floor(spec.image_width / spec.cell_size));
    g.dim = spec.feature_dim;
    g.cell_size = spec.cell_size;
    g.values.resize(static_cast<std::size_t>(g.rows) * g.cols * g.dim);
    std::normal_distribution<double> bg(0.0, spec.feature_noise);
    for (auto& v : g.values) v = quantize(bg(rng));

    std::uniform_int_distribution<int> clutter_count(0, spec.max_clutter);
    const int n_clutter = clutter_count(rng);
    for (int k = 0; k < n_clutter; ++k) {
        const BBox b = random_box(rng, spec.object_min_size * 0.6, spec.object_max_size * 0.8, spec.image_height,
                                  spec.image_width);
        std::normal_distribution<double> sig(0.0, spec.signature_scale * 0.6);
        std::vector<double> base(spec.feature_dim);
        for (auto& v : base) v = sig(rng);
        paint(g, b, base, spec.feature_noise, rng);
        img.salient_regions.push_back(b);
    }

    std::uniform_int_distribution<int> count(1, spec.max_objects);
    std::uniform_int_distribution<int> cls(0, spec.num_classes - 1);
    const int n_objects = count(rng);
    std::vector<BBox> placed;
    for (int k = 0; k < n_objects; ++k) {
        BBox b{};
        bool ok = false;
        for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
            b = random_box(rng, spec.object_min_size, spec.object_max_size, spec.image_height, spec.image_width);
            ok = std::all_of(placed.begin(), placed.end(),
                             [&](const BBox& p) { return iou(p, b) <= spec.max_overlap; });
        }
        if (!ok) continue;
        placed.push_back(b);
        if (distractor) {
            paint(g, b, perturbed(ood_signature, spec.instance_noise, rng), spec.feature_noise, rng);
        } else {
            const int c = cls(rng);
            paint(g, b, perturbed(signatures[c], spec.instance_noise, rng), spec.feature_noise, rng);
            img.objects.push_back(Annotation{b, c});
        }
        img.salient_regions.push_back(b);
    }
    return img;
}

}  // namespace detail

/// Generates `spec.num_images` training images (the last
/// round(distractor_fraction * num_images) of which are distractors) followed
/// by `spec.num_test_images` clean test images. Every image is rendered from
/// its own seed stream, so a dataset with extra distractors shares its clean
/// images with the dataset without them.
inline DatasetSplit generate_synthetic_dataset(const SceneSpec& spec, std::uint64_t seed) {
    if (spec.num_classes < 2 || spec.num_classes > 8)
        throw InvalidArgument("num_classes must be in [2, 8], got " + std::to_string(spec.num_classes));
    if (spec.num_images < 0 || spec.num_test_images < 0) throw InvalidArgument("image counts must be non-negative");
    if (spec.feature_dim < 1 || spec.cell_size <= 0.0) throw InvalidArgument("feature grid must be non-empty");
    if (spec.object_min_size <= 0.0 || spec.object_min_size > spec.object_max_size)
        throw InvalidArgument("object size range is empty");
    if (spec.object_min_size > spec.image_height || spec.object_min_size > spec.image_width ||
        spec.image_height < spec.cell_size || spec.image_width < spec.cell_size)
        throw InvalidArgument("image too small to place one object");
    if (spec.max_objects < 1) throw InvalidArgument("max_objects must be >= 1");
    if (spec.distractor_fraction < 0.0 || spec.distractor_fraction > 1.0)
        throw InvalidArgument("distractor_fraction must be in [0, 1]");

    auto signatures = spec.class_signatures;
    if (signatures.empty()) signatures = detail::make_signatures(spec, spec.num_classes, 1);
    if (static_cast<int>(signatures.size()) != spec.num_classes)
        throw InvalidArgument("class_signatures must have num_classes rows");
    for (const auto& s : signatures)
        if (static_cast<int>(s.size()) != spec.feature_dim)
            throw InvalidArgument("class signature length must equal feature_dim");
    const auto ood = detail::make_signatures(spec, 1, 2).front();

    DatasetSplit d;
    d.num_classes = spec.num_classes;
    const int n_distractors = static_cast<int>(std::lround(spec.distractor_fraction * spec.num_images));
    const int first_distractor = spec.num_images - n_distractors;
    for (int i = 0; i < spec.num_images; ++i) {
        auto rng = make_rng(seed, static_cast<std::uint64_t>(i));
        d.images.push_back(detail::render_image(spec, signatures, ood, i, i >= first_distractor, rng));
        d.unlabeled_ids.push_back(i);
    }
    // Test streams are offset so they never collide with training streams.
    for (int t = 0; t < spec.num_test_images; ++t) {
        const int id = spec.num_images + t;
        auto rng = make_rng(seed, (std::uint64_t{1} << 40) + static_cast<std::uint64_t>(t));
        d.images.push_back(detail::render_image(spec, signatures, ood, id, false, rng));
        d.test_ids.push_back(id);
    }
    return d;
}

/// Moves images from the unlabeled pool into the labeled set until every class
/// has at least `k` labeled images containing it. Classes are visited in index
/// order; an image chosen for one class counts for every class it contains.
inline DatasetSplit sample_initial_labels(const DatasetSplit& d, int k, std::uint64_t seed) {
    if (k < 0) throw InvalidArgument("k must be non-negative");
    DatasetSplit out = d;
    if (k == 0) return out;

    std::vector<int> labeled = d.labeled_ids;
    auto is_labeled = [&](int id) { return std::binary_search(labeled.begin(), labeled.end(), id); };
    auto rng = make_rng(seed, 0x1abe1);

    for (int c = 0; c < d.num_classes; ++c) {
        int have = 0;
        for (int id : labeled)
            if (d.image(id).contains_class(c)) ++have;
        std::vector<int> candidates;
        for (int id : d.unlabeled_ids)
            if (!is_labeled(id) && d.image(id).contains_class(c)) candidates.push_back(id);
        if (have + static_cast<int>(candidates.size()) < k)
            throw InvalidArgument("class " + std::to_string(c) + " has fewer than " + std::to_string(k) +
                                  " candidate images");
        std::shuffle(candidates.begin(), candidates.end(), rng);
        for (std::size_t i = 0; have < k; ++i, ++have) {
            labeled.insert(std::upper_bound(labeled.begin(), labeled.end(), candidates[i]), candidates[i]);
        }
    }

    out.labeled_ids = labeled;
    out.unlabeled_ids.clear();
    for (int id : d.unlabeled_ids)
        if (!is_labeled(id)) out.unlabeled_ids.push_back(id);
    return out;
}

/// Class-agnostic proposals: jittered copies of the image's salient regions
/// plus uniformly random rectangles. Only `salient_regions` and the image
/// size are read; annotations never are.
inline ProposalSet generate_proposals(const ImageRecord& img, const ProposalConfig& cfg, std::uint64_t seed) {
    ProposalSet set;
    set.image_id = img.image_id;
    if (cfg.proposals_per_image <= 0) return set;

    auto rng = make_rng(seed, static_cast<std::uint64_t>(img.image_id) + 0x9a0905a1ULL);
    std::normal_distribution<double> n01(0.0, 1.0);
    const auto& regions = img.salient_regions;
    const int n = cfg.proposals_per_image;
    const int n_random = regions.empty() ? n : static_cast<int>(std::lround(cfg.random_fraction * n));

    for (int i = 0; i < n - n_random; ++i) {
        const BBox& r = regions[static_cast<std::size_t>(i) % regions.size()];
        // The first pass over the regions is exact, the rest jittered.
        if (static_cast<std::size_t>(i) < regions.size()) {
            set.proposals.push_back(r);
            continue;
        }
        const double sh = cfg.jitter * r.height();
        const double sw = cfg.jitter * r.width();
        BBox b{r.up + sh * n01(rng), r.left + sw * n01(rng), r.bottom + sh * n01(rng), r.right + sw * n01(rng)};
        if (b.bottom < b.up) std::swap(b.bottom, b.up);
        if (b.right < b.left) std::swap(b.right, b.left);
        set.proposals.push_back(clip(b, img.height, img.width));
    }
    for (int i = 0; i < n_random; ++i) {
        const double lo = std::min(cfg.min_size, std::min(img.height, img.width));
        const double hi = std::min(cfg.max_size, std::min(img.height, img.width));
        set.proposals.push_back(detail::random_box(rng, lo, std::max(lo, hi), img.height, img.width));
    }
    return set;
}

// ---------------------------------------------------------------------------
// JSON persistence

inline json box_to_json(const BBox& b) { return json::array({b.up, b.left, b.bottom, b.right}); }

inline BBox box_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw ParseError("box must be an array [up,left,bottom,right]");
    return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline json to_json(const ImageRecord& img) {
    json objects = json::array();
    for (const auto& a : img.objects) objects.push_back({{"box", box_to_json(a.box)}, {"class_id", a.class_id}});
    json regions = json::array();
    for (const auto& r : img.salient_regions) regions.push_back(box_to_json(r));
    const auto& g = img.feature_grid;
    return json{{"id", img.image_id},
                {"width", img.width},
                {"height", img.height},
                {"objects", std::move(objects)},
                {"salient_regions", std::move(regions)},
                {"feature_grid",
                 {{"rows", g.rows}, {"cols", g.cols}, {"dim", g.dim}, {"cell_size", g.cell_size}, {"values", g.values}}},
                {"is_distractor", img.is_distractor}};
}

inline ImageRecord image_from_json(const json& j) {
    ImageRecord img;
    img.image_id = j.at("id").get<int>();
    img.width = j.at("width").get<double>();
    img.height = j.at("height").get<double>();
    for (const auto& o : j.at("objects"))
        img.objects.push_back(Annotation{box_from_json(o.at("box")), o.at("class_id").get<int>()});
    if (j.contains("salient_regions"))
        for (const auto& r : j.at("salient_regions")) img.salient_regions.push_back(box_from_json(r));
    const auto& g = j.at("feature_grid");
    img.feature_grid.rows = g.at("rows").get<int>();
    img.feature_grid.cols = g.at("cols").get<int>();
    img.feature_grid.dim = g.at("dim").get<int>();
    img.feature_grid.cell_size = g.at("cell_size").get<double>();
    img.feature_grid.values = g.at("values").get<std::vector<double>>();
    img.is_distractor = j.at("is_distractor").get<bool>();
    return img;
}

inline json to_json(const DatasetSplit& d) {
    json images = json::array();
    for (const auto& img : d.images) images.push_back(to_json(img));
    return json{{"num_classes", d.num_classes},
                {"images", std::move(images)},
                {"labeled_ids", d.labeled_ids},
                {"unlabeled_ids", d.unlabeled_ids},
                {"test_ids", d.test_ids}};
}

inline void DatasetSplit::validate() const {
    auto fail = [](const std::string& m) { throw InvalidArgument("invalid dataset: " + m); };
    if (num_classes < 1) fail("num_classes must be >= 1");
    for (std::size_t i = 1; i < images.size(); ++i)
        if (images[i - 1].image_id >= images[i].image_id) fail("image ids must be unique and ascending");
    for (const auto& img : images) {
        if (img.is_distractor && !img.objects.empty()) fail("distractor image with objects");
        const auto& g = img.feature_grid;
        if (g.values.size() != static_cast<std::size_t>(g.rows) * g.cols * g.dim) fail("feature grid size mismatch");
        for (const auto& a : img.objects) {
            if (a.class_id < 0 || a.class_id >= num_classes) fail("class_id out of range");
            if (!a.box.valid() || a.box.up < 0 || a.box.left < 0 || a.box.bottom > img.height ||
                a.box.right > img.width)
                fail("annotation outside image " + std::to_string(img.image_id));
        }
    }
    auto check_ids = [&](const std::vector<int>& ids, const char* name) {
        if (!std::is_sorted(ids.begin(), ids.end())) fail(std::string(name) + " must be sorted");
        for (int id : ids) (void)image(id);
    };
    check_ids(labeled_ids, "labeled_ids");
    check_ids(unlabeled_ids, "unlabeled_ids");
    check_ids(test_ids, "test_ids");
    auto disjoint = [](const std::vector<int>& a, const std::vector<int>& b) {
        std::vector<int> both;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
        return both.empty();
    };
    if (!disjoint(labeled_ids, unlabeled_ids) || !disjoint(labeled_ids, test_ids) ||
        !disjoint(unlabeled_ids, test_ids))
        fail("labeled, unlabeled and test ids must be pairwise disjoint");
}

inline DatasetSplit dataset_from_json(const json& j) {
    DatasetSplit d;
    try {
        d.num_classes = j.at("num_classes").get<int>();
        for (const auto& img : j.at("images")) d.images.push_back(image_from_json(img));
        d.labeled_ids = j.at("labeled_ids").get<std::vector<int>>();
        d.unlabeled_ids = j.at("unlabeled_ids").get<std::vector<int>>();
        d.test_ids = j.at("test_ids").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("dataset schema: ") + e.what());
    }
    d.validate();
    return d;
}

/// Parses JSON text, mapping syntax errors to ParseError with line/column.
inline json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, column = 1;
        const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < upto; ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        const auto line_start = text.rfind('\n', upto == 0 ? 0 : upto - 1);
        const auto begin = (line_start == std::string::npos || upto == 0) ? 0 : line_start + 1;
        const auto end = text.find('\n', begin);
        std::string context = text.substr(begin, std::min<std::size_t>(end - begin, 80));
        throw ParseError(origin + ":" + std::to_string(line) + ":" + std::to_string(column) +
                             ": malformed JSON near '" + context + "'",
                         line, column);
    }
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + path);
    out << text;
}

inline void save_dataset(const DatasetSplit& d, const std::string& path) { write_text_file(path, to_json(d).dump()); }

inline DatasetSplit load_dataset(const std::string& path) {
    return dataset_from_json(parse_json_text(read_text_file(path), path));
}

}  // namespace mspld
