#include "spatial/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace spatial {

namespace fs = std::filesystem;

const char* object_kind_name(ObjectKind k) {
    switch (k) {
        case ObjectKind::Box: return "box";
        case ObjectKind::Cylinder: return "cylinder";
        case ObjectKind::Bowl: return "bowl";
        case ObjectKind::Plate: return "plate";
        default: return "can";
    }
}

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// ---- surface samplers (area-uniform) ----

Vec3 sample_box(double w, double d, double h, Rng& rng) {
    double a_bottom = w * d, a_side_x = d * h, a_side_y = w * h;
    double areas[6] = {a_bottom, a_bottom, a_side_x, a_side_x, a_side_y, a_side_y};
    double total = 0.0;
    for (double a : areas) total += a;
    double pick = uniform(rng, 0.0, total);
    int face = 0;
    while (face < 5 && pick > areas[face]) pick -= areas[face++];
    double u = uniform(rng, -0.5, 0.5), v = uniform(rng, -0.5, 0.5);
    switch (face) {
        case 0: return {u * w, v * d, 0.0};
        case 1: return {u * w, v * d, h};
        case 2: return {-0.5 * w, u * d, (v + 0.5) * h};
        case 3: return {0.5 * w, u * d, (v + 0.5) * h};
        case 4: return {u * w, -0.5 * d, (v + 0.5) * h};
        default: return {u * w, 0.5 * d, (v + 0.5) * h};
    }
}

Vec3 sample_cylinder(double r, double h, bool with_top, Rng& rng) {
    double a_side = kTwoPi * r * h, a_disk = M_PI * r * r;
    double total = a_side + a_disk + (with_top ? a_disk : 0.0);
    double pick = uniform(rng, 0.0, total);
    double phi = uniform(rng, 0.0, kTwoPi);
    if (pick < a_side) return {r * std::cos(phi), r * std::sin(phi), uniform(rng, 0.0, h)};
    double rr = r * std::sqrt(uniform(rng, 0.0, 1.0));
    double z = (with_top && pick >= a_side + a_disk) ? h : 0.0;
    return {rr * std::cos(phi), rr * std::sin(phi), z};
}

Vec3 sample_bowl(double r, Rng& rng) {
    // lower hemisphere of a sphere centered at (0,0,r): bottom z=0, rim z=r
    double c = uniform(rng, -1.0, 0.0);  // cos(theta), uniform on the cap
    double s = std::sqrt(1.0 - c * c);
    double phi = uniform(rng, 0.0, kTwoPi);
    return {r * s * std::cos(phi), r * s * std::sin(phi), r + r * c};
}

struct Bounds {
    Vec3 lo, hi;
    Vec3 center() const { return (lo + hi) * 0.5; }
    Vec3 extent() const { return hi - lo; }
};

Bounds bounds_of(const PointCloud& cloud) {
    Bounds b{cloud.points[0], cloud.points[0]};
    for (const Vec3& p : cloud.points) {
        b.lo.x = std::min(b.lo.x, p.x); b.hi.x = std::max(b.hi.x, p.x);
        b.lo.y = std::min(b.lo.y, p.y); b.hi.y = std::max(b.hi.y, p.y);
        b.lo.z = std::min(b.lo.z, p.z); b.hi.z = std::max(b.hi.z, p.z);
    }
    return b;
}

double tilt_angle(const Quat& q) {
    Vec3 up = q.rotate({0.0, 0.0, 1.0});
    return std::acos(std::clamp(up.z / up.norm(), -1.0, 1.0));
}

double deg(double d) { return d * M_PI / 180.0; }

bool is_container(const ObjectTemplate& t) {
    return t.kind == ObjectKind::Bowl || t.kind == ObjectKind::Can;
}

double container_radius(const ObjectTemplate& t) { return t.sx; }

double object_height(const ObjectTemplate& t) {
    return t.kind == ObjectKind::Bowl ? t.sx : t.sz;
}

double horizontal_circumradius(const ObjectTemplate& t) {
    double r = 0.0;
    for (const Vec3& p : t.cloud.points) r = std::max(r, std::hypot(p.x, p.y));
    return r;
}

}  // namespace

ObjectTemplate make_template(const std::string& id, ObjectKind kind, double sx, double sy,
                             double sz, int n_points, Rng& rng) {
    if (n_points < 64) throw std::invalid_argument("object template needs >= 64 points");
    ObjectTemplate t;
    t.id = id;
    t.kind = kind;
    t.sx = sx;
    t.sy = sy;
    t.sz = sz;
    t.cloud.points.reserve(static_cast<std::size_t>(n_points));
    for (int i = 0; i < n_points; ++i) {
        switch (kind) {
            case ObjectKind::Box: t.cloud.points.push_back(sample_box(sx, sy, sz, rng)); break;
            case ObjectKind::Cylinder:
                t.cloud.points.push_back(sample_cylinder(sx, sz, true, rng));
                break;
            case ObjectKind::Can:
                t.cloud.points.push_back(sample_cylinder(sx, sz, false, rng));
                break;
            case ObjectKind::Plate:
                t.cloud.points.push_back(sample_cylinder(sx, sz, true, rng));
                break;
            case ObjectKind::Bowl: t.cloud.points.push_back(sample_bowl(sx, rng)); break;
        }
    }
    t.cloud.validate();
    return t;
}

std::vector<ObjectTemplate> default_template_set(Rng& rng, int n_points) {
    std::vector<ObjectTemplate> out;
    int idx = 0;
    auto add = [&](ObjectKind kind, double sx, double sy, double sz) {
        std::string id = std::string(object_kind_name(kind)) + "_" + std::to_string(idx++);
        out.push_back(make_template(id, kind, sx, sy, sz, n_points, rng));
    };
    for (int i = 0; i < 3; ++i)
        add(ObjectKind::Box, uniform(rng, 0.06, 0.14), uniform(rng, 0.06, 0.14),
            uniform(rng, 0.04, 0.12));
    // cylinders stay short and narrow so every container can hold one
    for (int i = 0; i < 2; ++i)
        add(ObjectKind::Cylinder, uniform(rng, 0.02, 0.032), 0.0, uniform(rng, 0.04, 0.068));
    for (int i = 0; i < 2; ++i) add(ObjectKind::Bowl, uniform(rng, 0.075, 0.1), 0.0, 0.0);
    add(ObjectKind::Plate, uniform(rng, 0.07, 0.11), 0.0, 0.015);
    for (int i = 0; i < 2; ++i)
        add(ObjectKind::Can, uniform(rng, 0.035, 0.06), 0.0, uniform(rng, 0.07, 0.12));
    return out;
}

const char* relation_class_name(RelationClass c) {
    switch (c) {
        case RelationClass::OnTop: return "on_top";
        case RelationClass::Inside: return "inside";
        case RelationClass::NextTo: return "next_to";
        default: return "on_top_inclined";
    }
}

std::optional<RelationClass> relation_class_by_name(const std::string& name) {
    for (RelationClass c : all_relation_classes())
        if (name == relation_class_name(c)) return c;
    return std::nullopt;
}

std::vector<RelationClass> all_relation_classes() {
    return {RelationClass::OnTop, RelationClass::Inside, RelationClass::NextTo,
            RelationClass::OnTopInclined};
}

bool relation_predicate(RelationClass c, const Scene& scene) {
    constexpr double eps = 0.006;
    Bounds a = bounds_of(transform_cloud(scene.cloud_a, scene.pose_a));
    Bounds b = bounds_of(transform_cloud(scene.cloud_b, scene.pose_b));
    double tilt = tilt_angle(scene.pose_a.q);

    switch (c) {
        case RelationClass::OnTop:
        case RelationClass::OnTopInclined: {
            bool contact = std::abs(a.lo.z - b.hi.z) <= eps;
            Vec3 da = a.center() - b.center();
            bool supported = std::abs(da.x) < 0.5 * b.extent().x + eps &&
                             std::abs(da.y) < 0.5 * b.extent().y + eps;
            if (!contact || !supported) return false;
            return c == RelationClass::OnTop ? tilt < deg(10.0)
                                             : (tilt >= deg(10.0) && tilt <= deg(50.0));
        }
        case RelationClass::Inside: {
            Vec3 da = a.center() - b.center();
            bool centered = std::abs(da.x) < 0.5 * b.extent().x &&
                            std::abs(da.y) < 0.5 * b.extent().y;
            bool contained = a.lo.z >= b.lo.z - eps && a.hi.z <= b.hi.z + eps;
            return centered && contained;
        }
        case RelationClass::NextTo: {
            double gap_x = std::max(a.lo.x - b.hi.x, b.lo.x - a.hi.x);
            double gap_y = std::max(a.lo.y - b.hi.y, b.lo.y - a.hi.y);
            double gap = std::max(gap_x, gap_y);
            bool beside = gap > 0.0 && gap <= 0.06;
            bool grounded = a.lo.z <= eps && b.lo.z <= eps;
            bool overlap_z = std::min(a.hi.z, b.hi.z) > std::max(a.lo.z, b.lo.z);
            return beside && grounded && overlap_z;
        }
    }
    return false;
}

std::size_t SimilarityLabels::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < scene_ids.size(); ++i)
        if (scene_ids[i] == id) return i;
    throw std::out_of_range("unknown scene id: " + id);
}

int SimilarityLabels::y(std::size_t i, std::size_t j) const {
    if (class_of[i].empty() || class_of[j].empty()) return -1;
    if (i == j) return 0;
    return class_of[i] == class_of[j] ? 0 : 1;
}

std::vector<std::string> SimilarityLabels::distinct_classes() const {
    std::vector<std::string> out;
    for (const std::string& c : class_of)
        if (!c.empty() && std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    std::sort(out.begin(), out.end());
    return out;
}

void save_labels(const std::string& path, const SimilarityLabels& labels) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write labels: " + path);
    f << "classes";
    for (const std::string& c : labels.distinct_classes()) f << ' ' << c;
    f << '\n';
    for (std::size_t i = 0; i < labels.size(); ++i)
        f << "label " << labels.scene_ids[i] << ' ' << labels.class_of[i] << '\n';
}

SimilarityLabels load_labels(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open labels: " + path);
    SimilarityLabels labels;
    std::string line;
    while (std::getline(f, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "label") {
            std::string id, cls;
            ss >> id;
            if (!ss) throw std::runtime_error("bad label line: " + line);
            ss >> cls;  // optional: scenes may be untagged
            labels.scene_ids.push_back(id);
            labels.class_of.push_back(cls);
        } else if (tag != "classes" && !tag.empty()) {
            throw std::runtime_error("bad labels line: " + line);
        }
    }
    return labels;
}

namespace {

struct SceneBuild {
    bool feasible = true;
    Scene scene;
};

Quat random_z_rotation(Rng& rng) {
    return Quat::from_axis_angle({0.0, 0.0, 1.0}, uniform(rng, 0.0, kTwoPi));
}

SceneBuild build_scene(RelationClass cls, const ObjectTemplate& a, const ObjectTemplate& b,
                       Rng& rng) {
    SceneBuild res;
    Scene& s = res.scene;
    s.object_a_id = a.id;
    s.object_b_id = b.id;
    s.cloud_a = a.cloud;
    s.cloud_b = b.cloud;
    s.pose_b = Pose{{0.0, 0.0, 0.0}, random_z_rotation(rng)};

    switch (cls) {
        case RelationClass::OnTop:
        case RelationClass::OnTopInclined: {
            if (b.kind == ObjectKind::Bowl || horizontal_circumradius(a) >
                                                  1.4 * horizontal_circumradius(b)) {
                res.feasible = false;
                return res;
            }
            Quat qa = random_z_rotation(rng);
            if (cls == RelationClass::OnTopInclined) {
                double phi = uniform(rng, 0.0, kTwoPi);
                Vec3 axis{std::cos(phi), std::sin(phi), 0.0};
                qa = Quat::from_axis_angle(axis, deg(uniform(rng, 15.0, 35.0))) * qa;
            }
            Bounds ba = bounds_of(transform_cloud(a.cloud, Pose{{0, 0, 0}, qa}));
            Bounds bb = bounds_of(transform_cloud(b.cloud, s.pose_b));
            double span = 0.2 * std::min(bb.extent().x, bb.extent().y);
            s.pose_a = Pose{{uniform(rng, -span, span), uniform(rng, -span, span),
                             bb.hi.z - ba.lo.z},
                            qa};
            break;
        }
        case RelationClass::Inside: {
            if (!is_container(b) || horizontal_circumradius(a) > 0.7 * container_radius(b) ||
                object_height(a) > 0.95 * object_height(b)) {
                res.feasible = false;
                return res;
            }
            Quat qa = random_z_rotation(rng);
            Bounds ba = bounds_of(transform_cloud(a.cloud, Pose{{0, 0, 0}, qa}));
            double lift = (b.kind == ObjectKind::Bowl) ? 0.02 * container_radius(b) : 0.003;
            s.pose_a = Pose{{0.0, 0.0, lift - ba.lo.z}, qa};
            break;
        }
        case RelationClass::NextTo: {
            Quat qa = random_z_rotation(rng);
            Bounds ba = bounds_of(transform_cloud(a.cloud, Pose{{0, 0, 0}, qa}));
            Bounds bb = bounds_of(transform_cloud(b.cloud, s.pose_b));
            double gap = uniform(rng, 0.008, 0.04);
            // place along +x or -x of B (axis-aligned gap keeps the
            // predicate's bbox test exact)
            double dir = uniform(rng, 0.0, 1.0) < 0.5 ? 1.0 : -1.0;
            double dx = dir > 0 ? bb.hi.x - ba.lo.x + gap : bb.lo.x - ba.hi.x - gap;
            double dy = uniform(rng, -0.02, 0.02);
            s.pose_a = Pose{{dx, dy, -ba.lo.z}, qa};
            break;
        }
    }
    return res;
}

}  // namespace

Dataset generate_dataset(int n_scenes, const std::vector<RelationClass>& classes,
                         const std::vector<ObjectTemplate>& templates, std::uint64_t seed) {
    if (classes.empty() || templates.size() < 2)
        throw std::invalid_argument("generate_dataset: need classes and >= 2 templates");
    if (n_scenes < 10 * static_cast<int>(classes.size()))
        throw std::invalid_argument("generate_dataset: need at least 10 scenes per class");

    Dataset ds;
    Rng rng(seed);
    std::set<std::string> skipped;
    const int per_class = n_scenes / static_cast<int>(classes.size());

    for (RelationClass cls : classes) {
        int made = 0;
        int attempts = 0;
        while (made < per_class) {
            if (++attempts > 10000 * per_class)
                throw std::runtime_error(std::string("generate_dataset: cannot satisfy class ") +
                                         relation_class_name(cls));
            std::size_t ia = rng() % templates.size();
            std::size_t ib = rng() % templates.size();
            if (ia == ib) continue;
            SceneBuild built = build_scene(cls, templates[ia], templates[ib], rng);
            if (!built.feasible) {
                std::string key = std::string(relation_class_name(cls)) + ": " +
                                  templates[ia].id + " / " + templates[ib].id;
                if (skipped.insert(key).second) ds.skipped_pairs.push_back(key);
                continue;
            }
            if (!relation_predicate(cls, built.scene)) continue;
            std::ostringstream id;
            id << relation_class_name(cls) << '_' << std::setw(4) << std::setfill('0') << made;
            built.scene.id = id.str();
            built.scene.validate();
            ds.labels.scene_ids.push_back(built.scene.id);
            ds.labels.class_of.push_back(relation_class_name(cls));
            ds.scenes.push_back(std::move(built.scene));
            ++made;
        }
    }
    return ds;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(fs::path(dir) / "scenes");
    for (const Scene& s : ds.scenes)
        save_scene((fs::path(dir) / "scenes" / (s.id + ".scene")).string(), s);
    save_labels((fs::path(dir) / "labels.txt").string(), ds.labels);
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    ds.labels = load_labels((fs::path(dir) / "labels.txt").string());
    for (const std::string& id : ds.labels.scene_ids)
        ds.scenes.push_back(load_scene((fs::path(dir) / "scenes" / (id + ".scene")).string()));
    return ds;
}

std::vector<DatasetSplit> make_splits(const std::vector<std::string>& ids, int n_splits,
                                      double test_fraction, std::uint64_t seed) {
    if (ids.size() < 2 || test_fraction <= 0.0 || test_fraction >= 1.0)
        throw std::invalid_argument("make_splits: bad arguments");
    std::vector<DatasetSplit> splits;
    for (int k = 0; k < n_splits; ++k) {
        Rng rng(seed + static_cast<std::uint64_t>(k) * 0x9e3779b97f4a7c15ULL);
        std::vector<std::string> shuffled = ids;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        std::size_t n_test = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(test_fraction * shuffled.size())));
        if (n_test >= shuffled.size()) n_test = shuffled.size() - 1;
        DatasetSplit split;
        split.seed = seed + static_cast<std::uint64_t>(k);
        split.test_ids.assign(shuffled.begin(), shuffled.begin() + n_test);
        split.train_ids.assign(shuffled.begin() + n_test, shuffled.end());
        std::sort(split.test_ids.begin(), split.test_ids.end());
        std::sort(split.train_ids.begin(), split.train_ids.end());
        splits.push_back(std::move(split));
    }
    return splits;
}

void save_split(const std::string& path, const DatasetSplit& split) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write split: " + path);
    for (std::size_t i = 0; i < split.train_ids.size(); ++i)
        f << (i ? " " : "") << split.train_ids[i];
    f << '\n';
    for (std::size_t i = 0; i < split.test_ids.size(); ++i)
        f << (i ? " " : "") << split.test_ids[i];
    f << '\n';
}

DatasetSplit load_split(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open split: " + path);
    DatasetSplit split;
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("split file truncated: " + path);
    std::istringstream tr(line);
    for (std::string id; tr >> id;) split.train_ids.push_back(id);
    if (!std::getline(f, line)) throw std::runtime_error("split file truncated: " + path);
    std::istringstream te(line);
    for (std::string id; te >> id;) split.test_ids.push_back(id);
    if (split.train_ids.empty() || split.test_ids.empty())
        throw std::runtime_error("split file has empty side: " + path);
    return split;
}

RetrievalResult knn_retrieval(const std::vector<std::vector<double>>& embeddings,
                              const SimilarityLabels& labels, const DatasetSplit& split,
                              int k) {
    if (split.test_ids.empty()) throw std::invalid_argument("knn_retrieval: empty test set");
    if (k > static_cast<int>(split.train_ids.size()))
        throw std::invalid_argument("knn_retrieval: k exceeds train set size");

    std::map<std::string, int> class_counts;
    std::vector<std::size_t> train_idx;
    for (const std::string& id : split.train_ids) {
        std::size_t i = labels.index_of(id);
        train_idx.push_back(i);
        ++class_counts[labels.class_of[i]];
    }

    RetrievalResult res;
    int hit3 = 0, hit5 = 0;
    for (const std::string& id : split.test_ids) {
        std::size_t ti = labels.index_of(id);
        const std::string& cls = labels.class_of[ti];
        if (class_counts[cls] < k) {
            ++res.excluded;
            continue;
        }
        std::vector<std::pair<double, std::string>> dists;
        dists.reserve(train_idx.size());
        for (std::size_t tr : train_idx) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < embeddings[ti].size(); ++c) {
                double d = embeddings[ti][c] - embeddings[tr][c];
                d2 += d * d;
            }
            dists.emplace_back(d2, labels.scene_ids[tr]);
        }
        std::sort(dists.begin(), dists.end());
        int same = 0;
        for (int i = 0; i < k; ++i)
            if (labels.class_of[labels.index_of(dists[static_cast<std::size_t>(i)].second)] ==
                cls)
                ++same;
        if (same >= 3) ++hit3;
        if (same == k) ++hit5;
        ++res.evaluated;
    }
    // All test scenes excluded: report zero accuracies with the exclusion
    // count rather than failing; an empty test set already threw above.
    res.acc_3of5 = res.evaluated ? static_cast<double>(hit3) / res.evaluated : 0.0;
    res.acc_5of5 = res.evaluated ? static_cast<double>(hit5) / res.evaluated : 0.0;
    return res;
}

}  // namespace spatial
