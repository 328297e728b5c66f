#include "auxetic/errors.hpp"

namespace auxetic {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidGeometry: return "InvalidGeometry";
    case ErrorKind::DisconnectedMesh: return "DisconnectedMesh";
    case ErrorKind::SingularElement: return "SingularElement";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::DegenerateCell: return "DegenerateCell";
    case ErrorKind::ExhaustedSampler: return "ExhaustedSampler";
    case ErrorKind::InsufficientLabels: return "InsufficientLabels";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace auxetic
