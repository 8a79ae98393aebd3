#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pichain/bytes.hpp"
#include "pichain/policy.hpp"
#include "pichain/types.hpp"

namespace pichain {

inline constexpr std::size_t kSecretBytes = 32;

struct NodeIdentity {
  NodeId node_id;
  Role role = Role::Gateway;
  Bytes secret;  // kSecretBytes

  Submitter submitter() const { return {node_id, role}; }
  bool operator==(const NodeIdentity&) const = default;
};

struct ProvisioningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic identity for demos and simulation: node_id and secret are
// SHA-256 of labelled strings, so every run provisions the same nodes.
NodeIdentity derive_identity(std::string_view label, Role role);

// Every node the parent has provisioned, keyed by node id.
class NodeRegistry {
 public:
  NodeRegistry() = default;
  explicit NodeRegistry(std::vector<NodeIdentity> nodes);

  void add(NodeIdentity node);
  const NodeIdentity* find(const NodeId& id) const;
  const std::map<NodeId, NodeIdentity>& nodes() const { return nodes_; }
  bool empty() const { return nodes_.empty(); }

  // Selector is a node id in hex or a role name that matches exactly one node.
  const NodeIdentity& select(std::string_view selector) const;

  // Adds every provisioned parent and gateway to the contract's node sets.
  void grant_roles(PolicyConfig& config) const;

 private:
  std::map<NodeId, NodeIdentity> nodes_;
};

// key=value lines; each record starts with node_id= and carries role= and secret=.
// '#' starts a comment. Throws ProvisioningError.
NodeRegistry parse_provisioning(std::string_view text);
NodeRegistry load_provisioning(const std::filesystem::path& path);
std::string format_provisioning(const NodeRegistry& registry);

}  // namespace pichain
