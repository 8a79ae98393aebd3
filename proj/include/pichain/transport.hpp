#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include "pichain/bytes.hpp"

namespace pichain {

struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Peer closed the channel (or it was closed locally).
struct ChannelClosed : TransportError {
  using TransportError::TransportError;
};

struct PortBusy : TransportError {
  using TransportError::TransportError;
};

// A bidirectional channel carrying whole frame payloads.
class FrameChannel {
 public:
  virtual ~FrameChannel() = default;

  // Throws ChannelClosed / TransportError.
  virtual void send(std::span<const std::uint8_t> payload) = 0;
  // nullopt on timeout. Throws ChannelClosed once the peer is gone and nothing is buffered.
  virtual std::optional<Bytes> receive(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
};

using ChannelPtr = std::unique_ptr<FrameChannel>;

// In-process pair; what one end sends the other receives, in order.
std::pair<ChannelPtr, ChannelPtr> make_local_pair();

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

// "host:port"; throws std::invalid_argument.
Endpoint parse_endpoint(std::string_view text);

class TcpListener {
 public:
  // Port 0 picks an ephemeral port. Throws PortBusy if the address is taken.
  explicit TcpListener(const Endpoint& ep);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  // nullptr on timeout.
  ChannelPtr accept(std::chrono::milliseconds timeout);
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// Throws TransportError when the miner is unreachable.
ChannelPtr tcp_connect(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::seconds(2));

}  // namespace pichain
