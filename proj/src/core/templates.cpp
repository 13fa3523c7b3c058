#include "mhfa/core/templates.hpp"

#include <cstdlib>
#include <map>
#include <mutex>

#include "mhfa/core/errors.hpp"
#include "mhfa/core/files.hpp"

namespace mhfa::templates {

namespace detail {
const std::map<std::string_view, std::string_view>& embedded();
}

namespace {

std::mutex g_mutex;

std::filesystem::path& override_dir() {
    static std::filesystem::path dir = [] {
        const char* env = std::getenv("MHFA_TEMPLATE_DIR");
        return env ? std::filesystem::path(env) : std::filesystem::path{};
    }();
    return dir;
}

}  // namespace

std::string get(std::string_view name) {
    {
        std::lock_guard lock(g_mutex);
        const auto& dir = override_dir();
        if (!dir.empty() && std::filesystem::exists(dir / name)) return read_file(dir / name);
    }
    const auto& table = detail::embedded();
    auto it = table.find(name);
    if (it == table.end()) throw Error("unknown template: " + std::string(name));
    return std::string(it->second);
}

std::vector<std::string> names() {
    std::vector<std::string> out;
    for (const auto& [name, _] : detail::embedded()) out.emplace_back(name);
    return out;
}

void set_override_dir(const std::filesystem::path& dir) {
    std::lock_guard lock(g_mutex);
    override_dir() = dir;
}

}  // namespace mhfa::templates
