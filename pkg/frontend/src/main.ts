import { ApiClient, RevisionConflictError } from "./api";
import { nudgeForKey, SNAP_KEY, UNDO_KEY } from "./controls";
import { drawBanner, drawDetections, drawWireframe } from "./overlay";
import {
  EditorState,
  initialState,
  markConflict,
  markSaved,
  newVehicleAt,
  nudge,
  selectVehicle,
  setVisibility,
  snapToGround,
  undo,
} from "./state";
import type { CalibrationCamera, Detection, VisibilityLevel } from "./types";

const PANEL_WIDTH = 640;

class App {
  private api = new ApiClient();
  private state: EditorState = initialState();
  private cameras: CalibrationCamera[] = [];
  private detections: Detection[] = [];
  private frames: number[] = [];
  private imagesAvailable = false;
  private showDetections = true;
  private panels = new Map<string, HTMLCanvasElement>();
  private images = new Map<string, HTMLImageElement>();
  private renderPending = false;

  async start(): Promise<void> {
    this.cameras = await this.api.calib();
    const index = await this.api.frames();
    this.frames = index.frames;
    this.imagesAvailable = index.images_available;
    this.state = initialState(this.frames[0] ?? 0);
    this.buildDom();
    await this.loadFrame(this.state.frame);
  }

  private buildDom(): void {
    const grid = document.getElementById("panels")!;
    grid.innerHTML = "";
    for (const camera of this.cameras.slice(0, 4)) {
      const cell = document.createElement("div");
      cell.className = "panel";
      const label = document.createElement("div");
      label.className = "panel-label";
      label.textContent = camera.id;
      const canvas = document.createElement("canvas");
      canvas.width = PANEL_WIDTH;
      canvas.height = Math.round((PANEL_WIDTH * camera.height) / camera.width);
      canvas.dataset.camera = camera.id;
      canvas.addEventListener("click", (event) => this.onPanelClick(camera, event));
      cell.append(label, canvas);
      grid.append(cell);
      this.panels.set(camera.id, canvas);
    }

    document.addEventListener("keydown", (event) => this.onKey(event));
    this.bindButton("save", () => void this.save());
    this.bindButton("undo", () => this.apply(undo(this.state)));
    this.bindButton("snap", () => this.apply(snapToGround(this.state)));
    this.bindButton("reload", () => void this.loadFrame(this.state.frame));
    this.bindButton("toggle-detections", () => {
      this.showDetections = !this.showDetections;
      void this.render();
    });
    const frameSelect = document.getElementById("frame") as HTMLSelectElement;
    frameSelect.innerHTML = this.frames
      .map((f) => `<option value="${f}">frame ${f}</option>`)
      .join("");
    frameSelect.addEventListener("change", () => {
      void this.loadFrame(Number(frameSelect.value));
    });
  }

  private bindButton(id: string, handler: () => void): void {
    document.getElementById(id)?.addEventListener("click", handler);
  }

  private async loadFrame(frame: number): Promise<void> {
    this.state = initialState(frame);
    try {
      this.detections = await this.api.detections(frame);
    } catch {
      this.detections = [];
    }
    const stored = await this.api.annotations(frame);
    this.state = { ...this.state, revision: stored.revision };
    this.renderVehicleList(stored.annotations.map((a) => a.vehicle_id));
    if (this.imagesAvailable) {
      await this.loadImages(frame);
    }
    await this.render();
  }

  private async loadImages(frame: number): Promise<void> {
    this.images.clear();
    await Promise.all(
      this.cameras.map(
        (camera) =>
          new Promise<void>((resolve) => {
            const img = new Image();
            img.onload = () => {
              this.images.set(camera.id, img);
              resolve();
            };
            img.onerror = () => resolve();
            img.src = this.api.imageUrl(frame, camera.id);
          }),
      ),
    );
  }

  private renderVehicleList(ids: string[]): void {
    const list = document.getElementById("vehicles")!;
    list.innerHTML = "";
    for (const id of ids) {
      const button = document.createElement("button");
      button.textContent = id;
      button.addEventListener("click", () => void this.selectExisting(id));
      list.append(button);
    }
  }

  private async selectExisting(vehicleId: string): Promise<void> {
    const stored = await this.api.annotations(this.state.frame);
    const record = stored.annotations.find((a) => a.vehicle_id === vehicleId);
    if (!record) {
      return;
    }
    this.state = selectVehicle(
      { ...this.state, revision: stored.revision },
      vehicleId,
      record.pose,
      this.cameras.map((c) => c.id),
      record.visibility,
      record.note,
    );
    await this.render();
  }

  private async onPanelClick(camera: CalibrationCamera, event: MouseEvent): Promise<void> {
    if (this.state.pose) {
      return;        // a vehicle is being edited; clicks do not re-seed
    }
    const canvas = this.panels.get(camera.id)!;
    const rect = canvas.getBoundingClientRect();
    const scale = camera.width / canvas.width;
    const u = (event.clientX - rect.left) * scale;
    const v = (event.clientY - rect.top) * scale;
    try {
      const ground = await this.api.castRay(camera.id, u, v);
      const vehicleId = `v${Date.now() % 100000}`;
      this.state = newVehicleAt(this.state, vehicleId, ground,
        this.cameras.map((c) => c.id));
      await this.render();
    } catch {
      this.bannerAll("click casts no ground point");
    }
  }

  private onKey(event: KeyboardEvent): void {
    if (event.key === UNDO_KEY) {
      this.apply(undo(this.state));
      return;
    }
    if (event.key === SNAP_KEY) {
      this.apply(snapToGround(this.state));
      return;
    }
    const action = nudgeForKey(event.key);
    if (action) {
      event.preventDefault();
      this.apply(nudge(this.state, action.field, action.direction));
    }
  }

  private apply(next: EditorState): void {
    if (next === this.state) {
      return;
    }
    this.state = next;
    void this.render();
  }

  async save(): Promise<void> {
    const { pose, vehicleId } = this.state;
    if (!pose || !vehicleId) {
      return;
    }
    try {
      const revision = await this.api.saveAnnotation(
        this.state.frame,
        {
          vehicle_id: vehicleId,
          pose,
          visibility: this.state.visibility,
          note: this.state.note,
          timestamp: new Date().toISOString(),
        },
        this.state.revision,
      );
      this.state = markSaved(this.state, revision);
      this.setStatus(`saved ${vehicleId} @ revision ${revision}`);
    } catch (error) {
      if (error instanceof RevisionConflictError) {
        this.state = markConflict(this.state, error.serverRevision);
        this.setStatus("revision conflict: reload the frame");
        return;
      }
      this.setStatus(`save failed: ${String(error)}`);
    }
  }

  setVisibilityLevel(camera: string, level: VisibilityLevel): void {
    this.apply(setVisibility(this.state, camera, level));
  }

  private setStatus(message: string): void {
    const status = document.getElementById("status");
    if (status) {
      status.textContent = message;
    }
  }

  private bannerAll(message: string): void {
    for (const canvas of this.panels.values()) {
      const ctx = canvas.getContext("2d")!;
      drawBanner(ctx, message);
    }
  }

  /** Redraw every panel; overlays come from one /project round trip. */
  private async render(): Promise<void> {
    if (this.renderPending) {
      return;
    }
    this.renderPending = true;
    try {
      const projection = this.state.pose
        ? await this.api.project(this.state.pose)
        : null;
      for (const camera of this.cameras) {
        const canvas = this.panels.get(camera.id);
        if (!canvas) {
          continue;
        }
        const ctx = canvas.getContext("2d")!;
        const scale = canvas.width / camera.width;
        ctx.clearRect(0, 0, canvas.width, canvas.height);
        const img = this.images.get(camera.id);
        if (img) {
          ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
        } else {
          ctx.fillStyle = "#15181d";
          ctx.fillRect(0, 0, canvas.width, canvas.height);
        }
        if (this.showDetections) {
          drawDetections(ctx, this.detections, camera.id, scale);
        }
        if (projection) {
          drawWireframe(ctx, projection[camera.id], scale);
        }
      }
      const dirty = document.getElementById("dirty");
      if (dirty) {
        dirty.textContent = this.state.conflict
          ? "CONFLICT"
          : this.state.dirty
            ? "unsaved"
            : "saved";
      }
    } catch (error) {
      this.bannerAll(`service unreachable: ${String(error)}`);
    } finally {
      this.renderPending = false;
    }
  }
}

if (typeof document !== "undefined" && document.getElementById("panels")) {
  void new App().start();
}

export { App };
