#include "graph_json.hpp"

#include <fstream>
#include <sstream>

#include "gkv/errors.hpp"

namespace gkv::cli {

SegmentGraph graph_from_json(const nlohmann::json& j) {
  try {
    std::vector<Segment> segments;
    for (const auto& s : j.at("segments")) {
      segments.push_back(Segment::from_text(s.at("id").get<SegmentId>(),
                                            s.at("text").get<std::string>()));
    }
    std::vector<Edge> edges;
    if (j.contains("edges")) {
      for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 2) {
          throw InputError("graph json: every edge must be [source, target]");
        }
        edges.push_back({e[0].get<SegmentId>(), e[1].get<SegmentId>()});
      }
    }
    std::vector<double> scores;
    if (j.contains("scores") && !j.at("scores").is_null()) {
      scores = j.at("scores").get<std::vector<double>>();
    }
    return SegmentGraph(std::move(segments), std::move(edges), std::move(scores));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("graph json: ") + e.what());
  }
}

nlohmann::ordered_json graph_to_json(const SegmentGraph& graph) {
  nlohmann::ordered_json j;
  j["segments"] = nlohmann::ordered_json::array();
  for (const auto& s : graph.segments()) {
    j["segments"].push_back({{"id", s.id}, {"text", detokenize(s.tokens)}});
  }
  j["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : graph.edges()) j["edges"].push_back({e.source, e.target});
  if (!graph.scores().empty()) j["scores"] = graph.scores();
  return j;
}

SegmentGraph read_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open graph file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("graph file '" + path + "' is not valid JSON: " + e.what());
  }
  try {
    return graph_from_json(j);
  } catch (const InputError& e) {
    throw InputError("graph file '" + path + "': " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
}

}  // namespace gkv::cli
