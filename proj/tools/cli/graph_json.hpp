#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "gkv/topology.hpp"

namespace gkv::cli {

// {"segments":[{"id":int,"text":str}],"edges":[[src,tgt]],"scores":[float]?}
SegmentGraph graph_from_json(const nlohmann::json& j);
nlohmann::ordered_json graph_to_json(const SegmentGraph& graph);

// Throws InputError naming `path` when it cannot be opened or parsed.
SegmentGraph read_graph_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace gkv::cli
