#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spatial/geometry.hpp"
#include "spatial/tensor.hpp"

namespace spatial {

// ---- object templates ----

enum class ObjectKind { Box, Cylinder, Bowl, Plate, Can };
const char* object_kind_name(ObjectKind k);

struct ObjectTemplate {
    std::string id;
    ObjectKind kind = ObjectKind::Box;
    // box: x extent, y extent, height; cylinder/can/plate: radius, -, height;
    // bowl: radius, -, -
    double sx = 0.1, sy = 0.1, sz = 0.1;
    PointCloud cloud;  // area-uniform surface sample, object-local frame (base at z=0)
};

ObjectTemplate make_template(const std::string& id, ObjectKind kind, double sx, double sy,
                             double sz, int n_points, Rng& rng);

// A small library of randomized desk-scale objects.
std::vector<ObjectTemplate> default_template_set(Rng& rng, int n_points = 256);

// ---- relation classes ----

enum class RelationClass { OnTop, Inside, NextTo, OnTopInclined };
const char* relation_class_name(RelationClass c);
std::optional<RelationClass> relation_class_by_name(const std::string& name);
std::vector<RelationClass> all_relation_classes();

// Deterministic geometric predicate for a class; object A is the
// upper/inner/moved object by generation convention.
bool relation_predicate(RelationClass c, const Scene& scene);

// ---- labels ----

// Binary similarity over scenes, derived from per-scene class tags:
// same class -> 0 (similar), different -> 1 (dissimilar). Scenes without
// a tag have undefined entries.
struct SimilarityLabels {
    std::vector<std::string> scene_ids;
    std::vector<std::string> class_of;  // empty string = untagged

    std::size_t size() const { return scene_ids.size(); }
    std::size_t index_of(const std::string& id) const;
    // 0 similar, 1 dissimilar, -1 undefined
    int y(std::size_t i, std::size_t j) const;
    std::vector<std::string> distinct_classes() const;
};

void save_labels(const std::string& path, const SimilarityLabels& labels);
SimilarityLabels load_labels(const std::string& path);

// ---- dataset ----

struct Dataset {
    std::vector<Scene> scenes;
    SimilarityLabels labels;
    std::vector<std::string> skipped_pairs;  // unsatisfiable template pairs, logged
};

// Class-balanced synthetic scene set; every scene passes its class
// predicate (rejection sampling). Deterministic per seed.
Dataset generate_dataset(int n_scenes, const std::vector<RelationClass>& classes,
                         const std::vector<ObjectTemplate>& templates, std::uint64_t seed);

void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

// ---- splits & retrieval ----

struct DatasetSplit {
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 0;
};

std::vector<DatasetSplit> make_splits(const std::vector<std::string>& ids, int n_splits,
                                      double test_fraction, std::uint64_t seed);
void save_split(const std::string& path, const DatasetSplit& split);
DatasetSplit load_split(const std::string& path);

struct RetrievalResult {
    double acc_3of5 = 0.0;
    double acc_5of5 = 0.0;
    int evaluated = 0;
    int excluded = 0;  // test scenes whose class has < k train members
};

// k nearest train embeddings per test scene (Euclidean, ties broken by
// scene id). embeddings[i] belongs to labels.scene_ids[i].
RetrievalResult knn_retrieval(const std::vector<std::vector<double>>& embeddings,
                              const SimilarityLabels& labels, const DatasetSplit& split,
                              int k = 5);

}  // namespace spatial
