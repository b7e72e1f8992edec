"""
Module base class with parameter, buffer and child registries
"""

from collections import OrderedDict
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.autograd.tensor import Parameter
from src.utils.exceptions import CheckpointError


class Module:
    """
    Base class of every layer, block and model

    Attributes assigned a ``Parameter`` or ``Module`` are registered
    automatically; running statistics go through ``register_buffer``.
    Registry names join with dots, giving checkpoint names such as
    ``stage1.0.conv1.weight``.
    """

    def __init__(self):
        object.__setattr__(self, '_parameters', OrderedDict())
        object.__setattr__(self, '_buffers', OrderedDict())
        object.__setattr__(self, '_modules', OrderedDict())
        object.__setattr__(self, 'training', True)

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Parameter):
            self.__dict__.pop(name, None)
            self._modules.pop(name, None)
            self._parameters[name] = value
        elif isinstance(value, Module):
            self.__dict__.pop(name, None)
            self._parameters.pop(name, None)
            self._modules[name] = value
        elif name in self._buffers:
            self._buffers[name] = value
        else:
            self._parameters.pop(name, None)
            self._modules.pop(name, None)
            object.__setattr__(self, name, value)

    def __getattr__(self, name: str) -> Any:
        for registry in ('_parameters', '_buffers', '_modules'):
            store = self.__dict__.get(registry)
            if store is not None and name in store:
                return store[name]
        raise AttributeError(f"{type(self).__name__} has no attribute '{name}'")

    def register_buffer(self, name: str, value: Optional[np.ndarray]) -> None:
        """Register a non-trainable array (e.g. running statistics)"""
        self._buffers[name] = value

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    # -- traversal ---------------------------------------------------------

    def named_modules(self, prefix: str = '') -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._modules.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def modules(self) -> Iterator["Module"]:
        for _, module in self.named_modules():
            yield module

    def named_parameters(self, prefix: str = '') -> Iterator[Tuple[str, Parameter]]:
        for module_name, module in self.named_modules(prefix):
            for name, param in module._parameters.items():
                yield (f"{module_name}.{name}" if module_name else name), param

    def parameters(self) -> List[Parameter]:
        return [param for _, param in self.named_parameters()]

    def named_buffers(self, prefix: str = '') -> Iterator[Tuple[str, Optional[np.ndarray]]]:
        for module_name, module in self.named_modules(prefix):
            for name, buffer in module._buffers.items():
                yield (f"{module_name}.{name}" if module_name else name), buffer

    # -- mode ----------------------------------------------------------------

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            object.__setattr__(module, 'training', mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    # -- state ---------------------------------------------------------------

    def state_dict(self) -> Dict[str, np.ndarray]:
        """
        Copy of every parameter and initialized buffer keyed by dotted name
        """
        state: Dict[str, np.ndarray] = OrderedDict()
        for name, param in self.named_parameters():
            state[name] = param.data.copy()
        for name, buffer in self.named_buffers():
            if buffer is not None:
                state[name] = buffer.copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> List[str]:
        """
        Load parameters and buffers by name

        Args:
            state: Mapping of dotted names to arrays
            strict: Reject missing or unexpected names

        Returns:
            Names that were loaded

        Raises:
            CheckpointError: On shape mismatch, or on name mismatch when strict
        """
        targets = dict(self.named_parameters())
        buffer_owners = {}
        for module_name, module in self.named_modules():
            for name in module._buffers:
                buffer_owners[f"{module_name}.{name}" if module_name else name] = (module, name)

        expected = set(targets) | set(buffer_owners)
        provided = {name for name in state if not name.startswith('__meta__')}
        if strict:
            missing = sorted(expected - provided)
            unexpected = sorted(provided - expected)
            if missing or unexpected:
                raise CheckpointError(
                    f"State mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}"
                )

        loaded = []
        for name in sorted(provided & expected):
            value = np.asarray(state[name])
            if name in targets:
                param = targets[name]
                if value.shape != param.shape:
                    raise CheckpointError(f"Shape mismatch for {name}: {value.shape} vs {param.shape}")
                param.data = value.astype(param.dtype, copy=True)
            else:
                module, attr = buffer_owners[name]
                current = module._buffers[attr]
                if current is not None and current.shape != value.shape:
                    raise CheckpointError(f"Shape mismatch for {name}: {value.shape} vs {current.shape}")
                module._buffers[attr] = value.astype(np.float64, copy=True)
            loaded.append(name)
        return loaded


class ModuleList(Module):
    """Ordered container whose children are named 0, 1, 2, ..."""

    def __init__(self, modules: Optional[List[Module]] = None):
        super().__init__()
        for module in modules or []:
            self.append(module)

    def append(self, module: Module) -> None:
        self._modules[str(len(self._modules))] = module

    def __iter__(self) -> Iterator[Module]:
        return iter(self._modules.values())

    def __len__(self) -> int:
        return len(self._modules)

    def __getitem__(self, index: int) -> Module:
        return list(self._modules.values())[index]
