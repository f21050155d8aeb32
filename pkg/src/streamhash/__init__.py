"""Online multi-modal hashing with frozen category codes and fused queries.

Training data arrives in rounds; each round learns binary codes for any new
categories from semantic supervision, derives instance codes from them,
updates closed-form per-modality hash functions through running sufficient
statistics, and appends to the searchable database. Queries are encoded by
fusing modalities with per-instance weights and ranked by Hamming distance.
"""

from .category_codes import (
    HighLevelState,
    generate_instance_codes,
    learn_new_category_codes,
    objective_value,
    solve_wc,
    update_bc_row,
)
from .data import (
    CategoryRegistry,
    CodeMatrix,
    Dataset,
    FeatureChunk,
    FeatureMatrix,
    FormatError,
    LabelMatrix,
    load_feature_matrix,
    sign_quantize,
    validate_chunk,
)
from .engine import (
    ChunkValidationError,
    EngineConfig,
    EngineState,
    StateFormatError,
    encode_query_batch,
    initial_state,
    load_state,
    save_state,
    train_round,
)
from .evaluation import (
    RankingResult,
    hamming_distances,
    mean_average_precision,
    precision_at_k,
    rank_by_hamming,
)
from .fusion import (
    QueryBatch,
    WeightVectors,
    compute_weights,
    encode_queries,
    solve_auxiliary,
    uniform_weights,
)
from .hash_functions import (
    HashFunctionState,
    ModalityStatistics,
    solve_projection,
    update_statistics,
)
from .kernel import KernelMap, apply_kernel_map, fit_anchors
from .scenarios import (
    ScenarioPlan,
    chunk_for_round,
    generate_synthetic,
    queries_for_round,
    split_category_incremental,
    split_iid,
)
from .semantics import (
    SemanticMatrix,
    embed_categories,
    hadamard_supervision,
    provider_from_spec,
    pseudo_embedding,
    sylvester_hadamard,
)

__version__ = "0.1.0"
