#include "mapgrad/data_model.hpp"

#include <set>
#include <sstream>

namespace mapgrad {

namespace {

std::string box_to_string(const BoundingBox& b) {
    std::ostringstream os;
    os << '[' << b.x_min << ',' << b.y_min << ',' << b.x_max << ',' << b.y_max << ']';
    return os.str();
}

}  // namespace

std::vector<Violation> validate_dataset(const Dataset& d) {
    std::vector<Violation> out;
    auto add = [&](const std::string& m) { out.push_back({m}); };

    if (d.num_classes < 1) add("class count must be >= 1");

    std::set<std::string> image_ids;
    for (std::size_t i = 0; i < d.images.size(); ++i) {
        const auto& im = d.images[i];
        if (!image_ids.insert(im.id).second)
            add("duplicate image id '" + im.id + "'");

        std::set<std::string> window_ids;
        for (std::size_t w = 0; w < im.proposals.size(); ++w) {
            const auto& p = im.proposals[w];
            if (w < im.proposal_ids.size() && !window_ids.insert(im.proposal_ids[w]).second)
                add("image '" + im.id + "': duplicate window id '" + im.proposal_ids[w] + "'");
            if (!p.box.valid())
                add("image '" + im.id + "': proposal box " + box_to_string(p.box) +
                    " is degenerate or non-finite");
            if (p.image != static_cast<int>(i))
                add("image '" + im.id + "': proposal references image index " +
                    std::to_string(p.image));
        }
        for (const auto& g : im.ground_truths) {
            if (g.class_id < 0 || g.class_id >= d.num_classes)
                add("image '" + im.id + "': ground truth class " + std::to_string(g.class_id) +
                    " outside [0," + std::to_string(d.num_classes) + ")");
            if (!g.box.valid())
                add("image '" + im.id + "': ground-truth box " + box_to_string(g.box) +
                    " is degenerate or non-finite");
            if (g.image < 0 || g.image >= static_cast<int>(d.images.size()))
                add("ground truth references unknown image index " + std::to_string(g.image));
            else if (g.image != static_cast<int>(i))
                add("image '" + im.id + "': ground truth references image index " +
                    std::to_string(g.image));
        }
    }
    return out;
}

}  // namespace mapgrad
