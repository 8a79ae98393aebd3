#include "pichain/provisioning.hpp"

#include <fstream>
#include <sstream>

#include "pichain/crypto.hpp"

namespace pichain {

NodeIdentity derive_identity(std::string_view label, Role role) {
  auto secret = sha256("pichain-secret:" + std::string(label));
  return NodeIdentity{NodeId{sha256("pichain-node:" + std::string(label))}, role,
                      Bytes(secret.begin(), secret.end())};
}

NodeRegistry::NodeRegistry(std::vector<NodeIdentity> nodes) {
  for (auto& n : nodes) add(std::move(n));
}

void NodeRegistry::add(NodeIdentity node) {
  if (node.secret.size() != kSecretBytes) throw ProvisioningError("secret must be 32 bytes");
  auto id = node.node_id;
  if (!nodes_.emplace(id, std::move(node)).second) {
    throw ProvisioningError("duplicate node_id " + id.hex());
  }
}

const NodeIdentity* NodeRegistry::find(const NodeId& id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

const NodeIdentity& NodeRegistry::select(std::string_view selector) const {
  if (auto id = NodeId::from_hex(selector)) {
    if (auto* n = find(*id)) return *n;
    throw ProvisioningError("node " + std::string(selector) + " is not provisioned");
  }
  auto role = role_from_string(selector);
  if (!role) throw ProvisioningError("unknown node selector '" + std::string(selector) + "'");
  const NodeIdentity* match = nullptr;
  for (const auto& [id, n] : nodes_) {
    if (n.role != *role) continue;
    if (match) throw ProvisioningError("more than one " + std::string(selector) + " node; select by node_id");
    match = &n;
  }
  if (!match) throw ProvisioningError("no " + std::string(selector) + " node provisioned");
  return *match;
}

void NodeRegistry::grant_roles(PolicyConfig& config) const {
  for (const auto& [id, n] : nodes_) {
    if (n.role == Role::Parent) config.parent_nodes.insert(id);
    if (n.role == Role::Gateway) config.gateway_nodes.insert(id);
  }
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

struct Partial {
  std::optional<NodeId> id;
  std::optional<Role> role;
  std::optional<Bytes> secret;
};

}  // namespace

NodeRegistry parse_provisioning(std::string_view text) {
  NodeRegistry reg;
  std::optional<Partial> cur;
  int line_no = 0;

  auto finish = [&] {
    if (!cur) return;
    if (!cur->role || !cur->secret) {
      throw ProvisioningError("node " + cur->id->hex() + " is missing role or secret");
    }
    reg.add(NodeIdentity{*cur->id, *cur->role, *cur->secret});
    cur.reset();
  };

  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ProvisioningError("line " + std::to_string(line_no) + ": expected key=value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    auto where = "line " + std::to_string(line_no) + ": ";
    if (key == "node_id") {
      finish();
      auto id = NodeId::from_hex(value);
      if (!id) throw ProvisioningError(where + "node_id must be 64 lowercase hex digits");
      cur = Partial{*id, {}, {}};
      continue;
    }
    if (!cur) throw ProvisioningError(where + "record must start with node_id");
    if (key == "role") {
      cur->role = role_from_string(value);
      if (!cur->role) throw ProvisioningError(where + "unknown role '" + std::string(value) + "'");
    } else if (key == "secret") {
      auto secret = from_hex(value);
      if (!secret || secret->size() != kSecretBytes) {
        throw ProvisioningError(where + "secret must be 64 lowercase hex digits");
      }
      cur->secret = std::move(*secret);
    } else {
      throw ProvisioningError(where + "unknown key '" + std::string(key) + "'");
    }
  }
  finish();
  if (reg.empty()) throw ProvisioningError("no nodes provisioned");
  return reg;
}

NodeRegistry load_provisioning(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ProvisioningError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_provisioning(ss.str());
}

std::string format_provisioning(const NodeRegistry& registry) {
  std::string out;
  for (const auto& [id, n] : registry.nodes()) {
    out += "node_id=" + id.hex() + "\n";
    out += "role=" + std::string(to_string(n.role)) + "\n";
    out += "secret=" + to_hex(n.secret) + "\n\n";
  }
  return out;
}

}  // namespace pichain
