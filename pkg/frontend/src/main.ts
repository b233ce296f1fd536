/** Browser entry point: wires the canvas and pointer events to the client. */

import { StudioClient } from "./client.js";
import { render } from "./render.js";
import { fitMapping, pixelToWorkspace, type Viewport } from "./transform.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const view: Viewport = { width: canvas.width, height: canvas.height, margin: 30 };

const url = new URLSearchParams(location.search).get("ws") ?? "ws://127.0.0.1:8790";
const client = new StudioClient(url, (u) => new WebSocket(u) as never);

client.onrender = () => {
  const hello = client.state.hello;
  if (hello === null) return;
  const m = fitMapping(hello.bounds, view);
  render(ctx, view.width, view.height, hello, client.state.frame, m);
};

let dragging = false;
function pointerDrag(ev: PointerEvent): void {
  const hello = client.state.hello;
  if (!dragging || hello === null) return;
  const rect = canvas.getBoundingClientRect();
  const m = fitMapping(hello.bounds, view);
  const [x, y] = pixelToWorkspace(m, ev.clientX - rect.left, ev.clientY - rect.top);
  const yaw = client.state.frame?.target.yaw_deg ?? 0;
  client.drag(x, y, yaw);
}

canvas.addEventListener("pointerdown", (ev) => {
  dragging = true;
  pointerDrag(ev);
});
canvas.addEventListener("pointermove", pointerDrag);
window.addEventListener("pointerup", () => {
  dragging = false;
});

document.getElementById("reset")?.addEventListener("click", () => client.reset());
const predBox = document.getElementById("prediction") as HTMLInputElement | null;
predBox?.addEventListener("change", () => client.setPrediction(predBox.checked));

client.connect();
