use pyo3::prelude::*;
use spectral_demix_py::spectral_demix_py;

const SCRIPT: &std::ffi::CStr = c"
import json
import spectral_demix_py as sd

inst = sd.Instance.generate(31, 2, 3, 2.6 / 30, seed=4)
out = sd.demix(inst.y)
score = inst.score(out['freqs'], out['amps'], out['spike_support'], out['spike_values'])
assert score['exact_demix'], score

zero = sd.Instance.picket_fence(16)
assert all(v == 0 for v in zero.y)
back = sd.Instance.from_json(inst.to_json())
assert back.freqs == inst.freqs

kappa, cmax = sd.kernel_constants(1000)
assert 0.467 <= kappa * 1000 <= 0.468 and cmax * 1000 <= 1.3

try:
    sd.Instance.picket_fence(15)
    raise AssertionError('expected ValueError')
except ValueError:
    pass

grid = json.loads(sd.run_grid(json.dumps({
    'n_values': [21], 'k_values': [1], 's_values': [1], 'delta_values': [2.5],
    'lambda_values': ['auto'], 'trials': 1, 'base_seed': 1})))
assert len(grid['cells']) == 1
";

#[test]
fn module_works_from_python() {
    pyo3::append_to_inittab!(spectral_demix_py);
    Python::initialize();
    Python::attach(|py| {
        if let Err(e) = py.run(SCRIPT, None, None) {
            e.print(py);
            panic!("embedded script failed");
        }
    });
}
