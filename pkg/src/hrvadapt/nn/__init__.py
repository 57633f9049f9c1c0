from .layers import (
    CnnParams,
    ConvLayer,
    LstmDirection,
    LstmParams,
    MlpParams,
    aggregate_add,
    bilstm_apply,
    cnn_apply,
    mlp_apply,
)
from .models import (
    ModelDims,
    Normalization,
    StudentModel,
    TeacherModel,
    collect_grads,
    init_aux,
    init_teacher,
    named_parameters,
    student_forward,
    teacher_forward,
    tensorize,
    trainable_parameter_names,
)
from .optim import AdamState, adam_step
from .tensor import Tensor, as_tensor, concat, conv1d, stack

__all__ = [
    "AdamState",
    "CnnParams",
    "ConvLayer",
    "LstmDirection",
    "LstmParams",
    "MlpParams",
    "ModelDims",
    "Normalization",
    "StudentModel",
    "TeacherModel",
    "Tensor",
    "adam_step",
    "aggregate_add",
    "as_tensor",
    "bilstm_apply",
    "cnn_apply",
    "collect_grads",
    "concat",
    "conv1d",
    "init_aux",
    "init_teacher",
    "mlp_apply",
    "named_parameters",
    "stack",
    "student_forward",
    "teacher_forward",
    "tensorize",
    "trainable_parameter_names",
]
