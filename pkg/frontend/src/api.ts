import type {
  AnnotationRecord,
  AnnotationsFile,
  CalibrationCamera,
  Detection,
  FramesIndex,
  Pose7DoF,
  ProjectionResponse,
} from "./types";

export class RevisionConflictError extends Error {
  constructor(public serverRevision: number) {
    super(`annotation revision conflict (server at ${serverRevision})`);
  }
}

/**
 * Typed client for the annotation service. All geometry (projection, ray
 * casting) goes through the service; the UI never computes it locally.
 */
export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`);
    if (!response.ok) {
      throw new Error(`GET ${path} failed: ${response.status}`);
    }
    return (await response.json()) as T;
  }

  async calib(): Promise<CalibrationCamera[]> {
    const data = await this.getJson<{ cameras: CalibrationCamera[] }>("/calib");
    return data.cameras;
  }

  frames(): Promise<FramesIndex> {
    return this.getJson<FramesIndex>("/frames");
  }

  async detections(frame: number): Promise<Detection[]> {
    const data = await this.getJson<{ detections: Detection[] }>(
      `/frames/${frame}/detections`,
    );
    return data.detections;
  }

  imageUrl(frame: number, cameraId: string): string {
    return `${this.base}/frames/${frame}/images/${cameraId}`;
  }

  async project(pose: Pose7DoF): Promise<ProjectionResponse> {
    const response = await this.fetchFn(`${this.base}/project`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(pose),
    });
    if (!response.ok) {
      throw new Error(`POST /project failed: ${response.status}`);
    }
    return (await response.json()) as ProjectionResponse;
  }

  async castRay(cameraId: string, u: number, v: number): Promise<{ x: number; y: number }> {
    const response = await this.fetchFn(`${this.base}/cast`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ camera_id: cameraId, u, v }),
    });
    if (!response.ok) {
      throw new Error(`POST /cast failed: ${response.status}`);
    }
    return (await response.json()) as { x: number; y: number };
  }

  annotations(frame: number): Promise<AnnotationsFile> {
    return this.getJson<AnnotationsFile>(`/frames/${frame}/annotations`);
  }

  async saveAnnotation(
    frame: number,
    annotation: Omit<AnnotationRecord, "frame">,
    baseRevision: number | null,
  ): Promise<number> {
    const response = await this.fetchFn(`${this.base}/frames/${frame}/annotations`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ annotation, base_revision: baseRevision }),
    });
    if (response.status === 409) {
      const detail = (await response.json()) as { detail?: { revision?: number } };
      throw new RevisionConflictError(detail.detail?.revision ?? -1);
    }
    if (!response.ok) {
      throw new Error(`PUT annotations failed: ${response.status}`);
    }
    const data = (await response.json()) as { revision: number };
    return data.revision;
  }
}
