#ifndef TEMNN_H
#define TEMNN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TemnnStatus {
  TEMNN_STATUS_OK = 0,
  TEMNN_STATUS_NULL_POINTER = 1,
  TEMNN_STATUS_INVALID_ARGUMENT = 2,
  TEMNN_STATUS_IO = 3,
  TEMNN_STATUS_PARSE = 4,
  TEMNN_STATUS_NOT_WATERTIGHT = 5,
  TEMNN_STATUS_MISMATCH = 6,
  TEMNN_STATUS_GEOMETRY = 7,
  TEMNN_STATUS_BUFFER_SIZE = 8,
  TEMNN_STATUS_PANIC = 9,
} TemnnStatus;

/**
 * A triangle mesh with lazily derived geometry.
 */
typedef struct TemnnMesh TemnnMesh;

/**
 * A trained model loaded from a checkpoint.
 */
typedef struct TemnnModel TemnnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *temnn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *temnn_version(void);

/**
 * Builds a mesh from `n_vertices x 3` coordinates and `n_faces x 3`
 * zero-based vertex indices.
 *
 * # Safety
 * `vertices` and `faces` must point to arrays of the stated sizes and `out`
 * to writable storage for one pointer.
 */
enum TemnnStatus temnn_mesh_new(const double *vertices,
                                size_t n_vertices,
                                const uint32_t *faces,
                                size_t n_faces,
                                struct TemnnMesh **out);

/**
 * Reads an `.off` or `.obj` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TemnnStatus temnn_mesh_load(const char *path, struct TemnnMesh **out);

/**
 * # Safety
 * `mesh` must come from this library and not be used afterwards.
 */
void temnn_mesh_free(struct TemnnMesh *mesh);

/**
 * Vertex count, or 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t temnn_mesh_num_vertices(const struct TemnnMesh *mesh);

/**
 * Writes 1 to `watertight` when every edge has exactly two faces, and the
 * number of boundary edges to `boundary_edges`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum TemnnStatus temnn_mesh_watertight(const struct TemnnMesh *mesh,
                                       int32_t *watertight,
                                       size_t *boundary_edges);

/**
 * Per-node thickness into `thickness` (length N; 0 for unpaired nodes) and
 * optionally partner indices into `partner` (length N; -1 when unpaired).
 *
 * # Safety
 * `mesh` must be live; buffers must hold `len` elements.
 */
enum TemnnStatus temnn_mesh_thickness(struct TemnnMesh *mesh,
                                      double *thickness,
                                      int64_t *partner,
                                      size_t len);

/**
 * Canonical frame: `rotation` receives 9 values in column-major order
 * (columns are the principal axes), `center` receives 3.
 *
 * # Safety
 * `mesh` must be live; `rotation` and `center` must hold 9 and 3 values.
 */
enum TemnnStatus temnn_mesh_frame(struct TemnnMesh *mesh, double *rotation, double *center);

/**
 * Invariant coordinates, row-major `N x 3`.
 *
 * # Safety
 * `mesh` must be live; `out` must hold `len` values.
 */
enum TemnnStatus temnn_mesh_invariant_coords(struct TemnnMesh *mesh, double *out, size_t len);

/**
 * Loads a checkpoint written by `temnn train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum TemnnStatus temnn_model_load(const char *path, struct TemnnModel **out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void temnn_model_free(struct TemnnModel *model);

/**
 * Length of the condition vector the model expects; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t temnn_model_cond_dim(const struct TemnnModel *model);

/**
 * Threshold value; returns NaN when the model has no thickness branch.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
double temnn_model_tau(const struct TemnnModel *model);

/**
 * Predicts per-node displacement in the mesh's own frame, row-major
 * `N x 3`, for injection node `gate` and the given condition vector.
 *
 * # Safety
 * Handles must be live; `condition` must hold `cond_len` values and `out`
 * `len` values.
 */
enum TemnnStatus temnn_model_predict(const struct TemnnModel *model,
                                     struct TemnnMesh *mesh,
                                     size_t gate,
                                     const double *condition,
                                     size_t cond_len,
                                     double *out,
                                     size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEMNN_H */
