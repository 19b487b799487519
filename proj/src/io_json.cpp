#include "mapgrad/io_json.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace mapgrad {

using nlohmann::json;

namespace {

json load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    json j;
    in >> j;
    return j;
}

void write_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

BoundingBox parse_box(const json& j) {
    if (!j.is_array() || j.size() != 4)
        throw std::runtime_error("box must be [x_min,y_min,x_max,y_max]");
    BoundingBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    return b;
}

json box_to_json(const BoundingBox& b) {
    return json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

}  // namespace

Dataset load_dataset_json(const std::string& path) {
    const json j = load_file(path);
    Dataset d;
    d.num_classes = j.at("classes").get<int>();
    const auto& images = j.at("images");
    d.images.reserve(images.size());
    for (const auto& jim : images) {
        ImageRecord im;
        im.id = jim.at("id").get<std::string>();
        const int image_index = static_cast<int>(d.images.size());
        if (jim.contains("proposals")) {
            for (const auto& jp : jim["proposals"]) {
                ProposalWindow p;
                p.image = image_index;
                p.window = static_cast<int>(im.proposals.size());
                p.box = parse_box(jp.at("box"));
                im.proposal_ids.push_back(jp.at("id").get<std::string>());
                im.proposals.push_back(p);
            }
        }
        if (jim.contains("ground_truth")) {
            for (const auto& jg : jim["ground_truth"]) {
                GroundTruthObject g;
                g.image = image_index;
                g.class_id = jg.at("class").get<int>();
                g.box = parse_box(jg.at("box"));
                im.ground_truths.push_back(g);
            }
        }
        d.images.push_back(std::move(im));
    }
    return d;
}

void save_dataset_json(const Dataset& d, const std::string& path) {
    json j;
    j["classes"] = d.num_classes;
    json images = json::array();
    for (const auto& im : d.images) {
        json jim;
        jim["id"] = im.id;
        json props = json::array();
        for (std::size_t w = 0; w < im.proposals.size(); ++w) {
            json jp;
            jp["id"] = im.proposal_ids[w];
            jp["box"] = box_to_json(im.proposals[w].box);
            props.push_back(std::move(jp));
        }
        jim["proposals"] = std::move(props);
        json gts = json::array();
        for (const auto& g : im.ground_truths) {
            json jg;
            jg["class"] = g.class_id;
            jg["box"] = box_to_json(g.box);
            gts.push_back(std::move(jg));
        }
        jim["ground_truth"] = std::move(gts);
        images.push_back(std::move(jim));
    }
    j["images"] = std::move(images);
    write_file(j, path);
}

ScoreTable load_scores_json(const std::string& path, const Dataset& d) {
    const json j = load_file(path);
    ScoreTable t(d);

    std::map<std::string, int> image_lookup;
    std::vector<std::map<std::string, int>> window_lookup(d.images.size());
    for (std::size_t i = 0; i < d.images.size(); ++i) {
        image_lookup[d.images[i].id] = static_cast<int>(i);
        for (std::size_t w = 0; w < d.images[i].proposal_ids.size(); ++w)
            window_lookup[i][d.images[i].proposal_ids[w]] = static_cast<int>(w);
    }

    std::vector<std::uint8_t> seen(t.size(), 0);
    for (const auto& js : j.at("scores")) {
        const std::string image_id = js.at("image").get<std::string>();
        const std::string window_id = js.at("window").get<std::string>();
        const int class_id = js.at("class").get<int>();
        const double score = js.at("score").get<double>();

        const auto it = image_lookup.find(image_id);
        if (it == image_lookup.end())
            throw std::runtime_error("scores reference unknown image '" + image_id + "'");
        const int image = it->second;
        const auto wt = window_lookup[static_cast<std::size_t>(image)].find(window_id);
        if (wt == window_lookup[static_cast<std::size_t>(image)].end())
            throw std::runtime_error("scores reference unknown window '" + window_id +
                                     "' in image '" + image_id + "'");
        if (class_id < 0 || class_id >= d.num_classes)
            throw std::runtime_error("scores reference class outside [0,K)");
        if (!std::isfinite(score))
            throw std::runtime_error("non-finite score for window '" + window_id + "'");

        const std::size_t idx = t.index(image, wt->second, class_id);
        if (seen[idx])
            throw std::runtime_error("duplicate score entry for (" + image_id + "," +
                                     window_id + "," + std::to_string(class_id) + ")");
        seen[idx] = 1;
        t.values()[idx] = score;
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i])
            throw std::runtime_error("scores file missing entries: expected every "
                                     "(window, class) pair exactly once");
    return t;
}

void save_scores_json(const ScoreTable& t, const Dataset& d, const std::string& path) {
    json entries = json::array();
    for (std::size_t i = 0; i < d.images.size(); ++i) {
        const auto& im = d.images[i];
        for (std::size_t w = 0; w < im.proposals.size(); ++w) {
            for (int c = 0; c < d.num_classes; ++c) {
                json e;
                e["image"] = im.id;
                e["window"] = im.proposal_ids[w];
                e["class"] = c;
                e["score"] = t.at(static_cast<int>(i), static_cast<int>(w), c);
                entries.push_back(std::move(e));
            }
        }
    }
    json j;
    j["scores"] = std::move(entries);
    write_file(j, path);
}

}  // namespace mapgrad
