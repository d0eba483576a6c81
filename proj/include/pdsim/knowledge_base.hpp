/* Copyright 2026 The pdsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "pdsim/pdgraph.hpp"

namespace pdsim {

// Knowledge-base documents: one JSON object per application holding the
// profiled PDGraph. Malformed documents are rejected with the JSON path of
// the offending value.
nlohmann::json to_json(const PDGraph& graph);
PDGraph graph_from_json(const nlohmann::json& doc);

PDGraph load_knowledge_base(const std::filesystem::path& path);
void save_knowledge_base(const PDGraph& graph, const std::filesystem::path& path);

nlohmann::json to_json(const BackendSpec& spec);
BackendSpec backend_from_json(const nlohmann::json& doc);

}  // namespace pdsim
