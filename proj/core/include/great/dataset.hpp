// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "great/rng.hpp"
#include "great/types.hpp"

namespace great::data {

struct PointEntry {
    std::string id;      // relative file path of the instance file
    std::string file;    // instance coordinates file, relative to manifest dir
    std::string object;
    std::map<std::string, std::string> labels;  // affordance -> annotation file
};

struct ImageEntry {
    std::string id;  // file stem; used as the image id throughout
    std::string file;
    std::string object;
    std::string affordance;
};

struct Manifest {
    std::filesystem::path root;  // directory of the manifest file
    std::vector<std::string> objects;
    std::vector<std::string> affordances;
    std::vector<PointEntry> points;
    std::vector<ImageEntry> images;

    const PointEntry* find_point(const std::string& id) const;
    const ImageEntry* find_image(const std::string& id) const;
};

// Annotation-level id: "<point entry id>#<affordance>".
std::string annotation_id(const std::string& point_id, const std::string& affordance);
std::pair<std::string, std::string> split_annotation_id(const std::string& id);

struct PartitionSpec {
    std::string name;  // seen | unseen_object | unseen_affordance
    // Mixed id lists: image ids and annotation ids ("file#affordance").
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::set<std::string> held_out_objects;
    std::set<std::string> held_out_affordances;

    std::vector<std::string> train_images(const Manifest& m) const;
    std::vector<std::string> test_images(const Manifest& m) const;
    std::vector<std::string> train_annotations(const Manifest& m) const;
    std::vector<std::string> test_annotations(const Manifest& m) const;
};

struct PairedSample {
    PointCloudInstance points;
    AffordanceAnnotation label;
    InteractionImage image;
};

struct Partitions {
    PartitionSpec seen;
    PartitionSpec unseen_object;
    PartitionSpec unseen_affordance;

    const PartitionSpec& by_name(const std::string& name) const;
};

// ---- loading ----

Manifest load_manifest(const std::filesystem::path& path);

// Whitespace text, exactly 2048 rows of "x y z h". Returns raw values; no
// normalization is applied at this layer so write/read round trips are exact.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> load_point_annotation(const std::filesystem::path& path);

void write_point_annotation(const Eigen::MatrixXd& coords, const Eigen::VectorXd& heatmap,
                            const std::filesystem::path& path);

// Center to zero mean, scale to unit max radius. Errors on degenerate clouds.
Eigen::MatrixXd normalize_cloud(const Eigen::MatrixXd& coords);

// ---- partitioning ----

Partitions make_partitions(const Manifest& manifest, const std::set<std::string>& held_out_objects,
                           const std::set<std::string>& held_out_affordances, uint64_t seed,
                           double seen_split_ratio = 0.8);

// Throws on any violated partition invariant; used by tests and the CLI.
void validate_partition(const PartitionSpec& spec, const Manifest& manifest);

// ---- sampling ----

// Parsed-file cache so repeated draws of the same instance/image avoid disk.
class DataCache {
public:
    DataCache(const Manifest& manifest, int image_size, bool normalize_points);

    PairedSample load_pair(const std::string& image_id, const std::string& annotation_id);
    const InteractionImage& image(const std::string& image_id);
    // coords (normalized if configured) and heatmap for an annotation id
    const std::pair<Eigen::MatrixXd, Eigen::VectorXd>& annotation(const std::string& annotation_id);

    int image_size() const { return image_size_; }

private:
    const Manifest& manifest_;
    int image_size_;
    bool normalize_points_;
    std::map<std::string, InteractionImage> images_;
    std::map<std::string, std::pair<Eigen::MatrixXd, Eigen::VectorXd>> annotations_;
};

// Draws batch_size samples from the partition's train side: a uniformly drawn
// image paired with an independently drawn point instance from the same
// (object, affordance) cell.
std::vector<PairedSample> sample_batch(const PartitionSpec& partition, const Manifest& manifest,
                                       int batch_size, Rng& rng, DataCache* cache = nullptr);

// Deterministic test-side pairing: images in sorted order, each matched with a
// seeded uniform draw among that cell's test instances.
std::vector<std::pair<std::string, std::string>> pair_test_entries(const PartitionSpec& partition,
                                                                   const Manifest& manifest,
                                                                   uint64_t seed);

}  // namespace great::data
