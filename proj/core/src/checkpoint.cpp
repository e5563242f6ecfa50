#include "bundleflow/checkpoint.hpp"

namespace bundleflow {

void write_checkpoint_header(BinWriter& w, CheckpointKind kind) {
    w.u32(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(kind));
}

CheckpointKind read_checkpoint_header(BinReader& r) {
    if (r.u32() != kCheckpointMagic) throw IoError("not a checkpoint file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    return static_cast<CheckpointKind>(r.u32());
}

BinReader open_checkpoint(const std::string& path, CheckpointKind expected) {
    BinReader r = BinReader::from_file(path);
    const CheckpointKind kind = read_checkpoint_header(r);
    if (kind != expected)
        throw IoError("checkpoint kind mismatch in " + path + " (got kind " +
                      std::to_string(static_cast<std::uint32_t>(kind)) + ")");
    return r;
}

void write_vector_field(BinWriter& w, const VectorField& vf, double horizon) {
    w.u64(vf.m);
    w.f64(horizon);
    vf.qnet.save(w);
    vf.etanet.save(w);
}

std::pair<VectorField, double> read_vector_field(BinReader& r) {
    VectorField vf;
    vf.m = static_cast<std::size_t>(r.u64());
    const double horizon = r.f64();
    vf.qnet = DenseNet::load(r);
    vf.etanet = DenseNet::load(r);
    if (vf.qnet.input_dim() != vf.m || vf.qnet.output_dim() != vf.m * vf.m)
        throw IoError("field checkpoint: state net shape does not match m");
    if (vf.etanet.input_dim() != 1 || vf.etanet.output_dim() != 1)
        throw IoError("field checkpoint: time net must be scalar to scalar");
    return {std::move(vf), horizon};
}

void save_vector_field(const std::string& path, const VectorField& vf, double horizon) {
    BinWriter w;
    write_checkpoint_header(w, CheckpointKind::VectorField);
    write_vector_field(w, vf, horizon);
    w.write_file(path);
}

std::pair<VectorField, double> load_vector_field(const std::string& path) {
    BinReader r = open_checkpoint(path, CheckpointKind::VectorField);
    return read_vector_field(r);
}

}  // namespace bundleflow
