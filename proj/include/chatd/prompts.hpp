#pragma once

#include <map>
#include <string>
#include <string_view>

namespace chatd::prompts {

/// Version directory the prompts were embedded from (prompts/<version>).
extern const char* const kVersion;

/// Every embedded prompt by file stem, e.g. "planner".
const std::map<std::string, std::string, std::less<>>& all();

/// Prompt text by name; throws Error(kInvalidParams) for unknown names.
const std::string& get(std::string_view name);

/// Replaces each {{key}} with its value. Unknown placeholders are left as is.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars);

/// get() followed by render().
std::string render_named(std::string_view name, const std::map<std::string, std::string>& vars);

}  // namespace chatd::prompts
