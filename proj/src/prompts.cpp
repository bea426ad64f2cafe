#include "chatd/prompts.hpp"

#include "chatd/error.hpp"

namespace chatd::prompts {

const std::string& get(std::string_view name) {
  const auto& table = all();
  auto it = table.find(name);
  if (it == table.end()) throw Error(ErrorCode::kInvalidParams, "no prompt named '" + std::string(name) + "'");
  return it->second;
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    if (auto it = vars.find(key); it != vars.end()) {
      out += it->second;
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

std::string render_named(std::string_view name, const std::map<std::string, std::string>& vars) {
  return render(get(name), vars);
}

}  // namespace chatd::prompts
