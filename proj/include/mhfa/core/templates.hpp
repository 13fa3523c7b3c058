#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mhfa::templates {

/// Text of a shipped template file (e.g. "analysis_v1.txt"). Files found in
/// the override directory, when one is set, take precedence over the
/// compiled-in copies. Throws mhfa::Error for an unknown name.
std::string get(std::string_view name);

std::vector<std::string> names();

/// Empty path disables overrides. Also read from MHFA_TEMPLATE_DIR at startup.
void set_override_dir(const std::filesystem::path& dir);

}  // namespace mhfa::templates
