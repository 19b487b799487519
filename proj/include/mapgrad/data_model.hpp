#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mapgrad/geometry.hpp"

namespace mapgrad {

/// Internal identifiers are dense indices; external files use opaque strings.
struct GroundTruthObject {
    int image = -1;     // index into Dataset::images
    int class_id = -1;  // in [0, K)
    BoundingBox box;
};

struct ProposalWindow {
    int image = -1;
    int window = -1;  // index into the image's proposal list
    BoundingBox box;
};

struct ImageRecord {
    std::string id;
    std::vector<std::string> proposal_ids;
    std::vector<ProposalWindow> proposals;
    std::vector<GroundTruthObject> ground_truths;
};

struct Dataset {
    int num_classes = 0;
    std::vector<ImageRecord> images;

    std::size_t total_windows() const {
        std::size_t n = 0;
        for (const auto& im : images) n += im.proposals.size();
        return n;
    }

    /// Flat window index of (image, window), dense over the whole dataset.
    std::vector<std::size_t> window_offsets() const {
        std::vector<std::size_t> off(images.size() + 1, 0);
        for (std::size_t i = 0; i < images.size(); ++i)
            off[i + 1] = off[i] + images[i].proposals.size();
        return off;
    }

    std::size_t gt_count(int class_id) const {
        std::size_t n = 0;
        for (const auto& im : images)
            for (const auto& g : im.ground_truths)
                if (g.class_id == class_id) ++n;
        return n;
    }
};

struct Violation {
    std::string message;
};

/// Structural checks mirroring the type invariants. Violations are data, not errors.
std::vector<Violation> validate_dataset(const Dataset& d);

}  // namespace mapgrad
