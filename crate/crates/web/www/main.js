import init, { render_test_signal, render_wav, midpoint_energy } from "./pkg/wvdnet_web.js";

const $ = (id) => document.getElementById(id);
let wavBytes = null;

function source() {
  return document.querySelector('input[name="source"]:checked').value;
}

// Rows are time, columns frequency; draw time on x and frequency upwards.
function draw(img) {
  const canvas = $("view");
  const rows = img.rows, cols = img.cols;
  canvas.width = rows;
  canvas.height = cols;
  const ctx = canvas.getContext("2d");
  const pixels = ctx.createImageData(rows, cols);
  const v = img.values();
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const x = v[r * cols + c];
      const o = ((cols - 1 - c) * rows + r) * 4;
      pixels.data[o] = Math.round(255 * Math.min(1, 3 * x));
      pixels.data[o + 1] = Math.round(255 * Math.min(1, Math.max(0, 3 * x - 1)));
      pixels.data[o + 2] = Math.round(255 * Math.min(1, Math.max(0, 3 * x - 2)));
      pixels.data[o + 3] = 255;
    }
  }
  ctx.putImageData(pixels, 0, 0);
  $("axis").textContent =
    `time 0 to ${img.duration_s.toFixed(2)} s (left to right), frequency 0 to ${img.max_freq_hz.toFixed(0)} Hz (bottom to top)`;
  img.free();
}

function render() {
  const tfd = $("tfd").value;
  const lag = Number($("lag").value);
  $("lag-value").textContent = lag;
  $("status").textContent = "";
  try {
    if (source() === "wav") {
      if (!wavBytes) {
        $("status").textContent = "choose a WAV file";
        return;
      }
      draw(render_wav(wavBytes, tfd, lag, 4.0));
    } else {
      draw(render_test_signal($("signal").value, tfd, lag, 1.0));
    }
  } catch (e) {
    $("status").textContent = String(e);
  }
}

function energies() {
  try {
    const [plain, pseudo] = midpoint_energy(Number($("lag").value));
    $("e-plain").textContent = plain.toExponential(3);
    $("e-pseudo").textContent = pseudo.toExponential(3);
    $("e-ratio").textContent = (plain / pseudo).toFixed(1);
  } catch (e) {
    $("status").textContent = String(e);
  }
}

await init();

for (const id of ["signal", "tfd"]) $(id).addEventListener("change", render);
for (const el of document.querySelectorAll('input[name="source"]')) el.addEventListener("change", render);
$("lag").addEventListener("input", () => { $("lag-value").textContent = $("lag").value; });
$("lag").addEventListener("change", () => { render(); energies(); });
$("wav").addEventListener("change", async (ev) => {
  const file = ev.target.files[0];
  if (!file) return;
  wavBytes = new Uint8Array(await file.arrayBuffer());
  document.querySelector('input[name="source"][value="wav"]').checked = true;
  render();
});

render();
energies();
